//! Protocol parameter set shared by every other module.
//!
//! The defaults (n = 128, q = 65537, tau = 3.0) are demonstration parameters:
//! the correctness bound `12 * tau^2 * n <= q/4 - 2` holds with margin and one
//! n x n x n product stays in the millisecond range. They make no claim about
//! concrete bit security.

use std::fmt;
use std::path::Path;

use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake256;
use thiserror::Error;

/// Length of the public seed used to derive the shared basis.
pub const LAMBDA_LEN: usize = 32;

/// Largest modulus accepted. Matrix entries travel as 4-byte integers.
pub const MAX_MODULUS: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("modulus {0} is even")]
    EvenModulus(u64),
    #[error("modulus {0} is too small (need odd q > 8 with floor(q/4) - 2 > 0)")]
    ModulusTooSmall(u64),
    #[error("modulus {0} does not fit the 32-bit entry encoding")]
    ModulusTooLarge(u64),
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("gaussian parameter {0} must be finite and positive")]
    InvalidTau(f64),
    #[error("noise budget 12*tau^2*n = {budget} exceeds tolerance q/4 - 2 = {tolerance}")]
    ToleranceViolated { budget: f64, tolerance: f64 },
    #[error("tail cutoff {cutoff} * tau {tau} must stay below q/2")]
    CutoffTooLarge { cutoff: u32, tau: f64 },
    #[error("salt length must be positive")]
    ZeroSaltLength,
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("reading config: {0}")]
    Io(String),
}

/// Which invariants [`ProtocolParams::check`] enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundPolicy {
    /// All invariants, including the correctness bound.
    #[default]
    Strict,
    /// Skips the correctness bound only. Toy profiles used by exhaustive
    /// small-modulus tests need this; agreement is then not guaranteed.
    AllowUnsafe,
}

#[derive(Clone, PartialEq)]
pub struct ProtocolParams {
    pub n: usize,
    pub q: u64,
    pub tau: f64,
    pub lambda_seed: [u8; LAMBDA_LEN],
    pub tail_cutoff: u32,
    pub salt_len: usize,
}

impl fmt::Debug for ProtocolParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProtocolParams")
            .field("n", &self.n)
            .field("q", &self.q)
            .field("tau", &self.tau)
            .field("lambda_seed", &hex::encode(self.lambda_seed))
            .field("tail_cutoff", &self.tail_cutoff)
            .field("salt_len", &self.salt_len)
            .finish()
    }
}

/// The public seed used when none is configured.
pub fn default_lambda() -> [u8; LAMBDA_LEN] {
    let mut xof = Shake256::default();
    xof.update(b"LSRP-default-lambda");
    let mut out = [0u8; LAMBDA_LEN];
    xof.finalize_xof().read(&mut out);
    out
}

/// Demonstration parameters: n = 128, q = 65537, tau = 3.0, t = 10, 16-byte salts.
pub fn default_params() -> ProtocolParams {
    ProtocolParams::default()
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            n: 128,
            q: 65537,
            tau: 3.0,
            lambda_seed: default_lambda(),
            tail_cutoff: 10,
            salt_len: 16,
        }
    }
}

impl ProtocolParams {
    /// Default parameters with a freshly drawn public seed.
    pub fn with_fresh_lambda() -> Result<Self, getrandom::Error> {
        let mut lambda_seed = [0u8; LAMBDA_LEN];
        getrandom::getrandom(&mut lambda_seed)?;
        Ok(Self {
            lambda_seed,
            ..Self::default()
        })
    }

    /// Small profile for hand-checkable tests. Violates the correctness
    /// bound, so it only passes [`BoundPolicy::AllowUnsafe`].
    pub fn toy(n: usize, q: u64, tau: f64) -> Self {
        Self {
            n,
            q,
            tau,
            ..Self::default()
        }
    }

    /// Tolerance `floor(q/4) - 2` of the extractor.
    pub fn tolerance(&self) -> i64 {
        (self.q / 4) as i64 - 2
    }

    /// `floor(12 * tau^2 * n)`, the analytic bound on the key-material gap.
    pub fn noise_budget(&self) -> u64 {
        (12.0 * self.tau * self.tau * self.n as f64).floor() as u64
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        self.check(BoundPolicy::Strict)
    }

    pub fn check(&self, policy: BoundPolicy) -> Result<(), ParamsError> {
        if self.q.is_multiple_of(2) {
            return Err(ParamsError::EvenModulus(self.q));
        }
        if self.q <= 8 || self.tolerance() <= 0 {
            return Err(ParamsError::ModulusTooSmall(self.q));
        }
        if self.q > MAX_MODULUS {
            return Err(ParamsError::ModulusTooLarge(self.q));
        }
        if self.n == 0 {
            return Err(ParamsError::ZeroDimension);
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(ParamsError::InvalidTau(self.tau));
        }
        if self.salt_len == 0 {
            return Err(ParamsError::ZeroSaltLength);
        }
        if policy == BoundPolicy::Strict {
            let budget = 12.0 * self.tau * self.tau * self.n as f64;
            let tolerance = self.q as f64 / 4.0 - 2.0;
            if budget > tolerance {
                return Err(ParamsError::ToleranceViolated { budget, tolerance });
            }
        }
        if self.tail_cutoff == 0 || self.tail_cutoff as f64 * self.tau >= self.q as f64 / 2.0 {
            return Err(ParamsError::CutoffTooLarge {
                cutoff: self.tail_cutoff,
                tau: self.tau,
            });
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are skipped; unknown keys are rejected.
    pub fn apply_config(mut self, text: &str) -> Result<Self, ParamsError> {
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| ParamsError::Config {
                line: line_no,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let num_err = |e: &dyn fmt::Display| bad(format!("{key}: {e}"));
            match key {
                "n" => self.n = value.parse().map_err(|e| num_err(&e))?,
                "q" => self.q = value.parse().map_err(|e| num_err(&e))?,
                "tau" => self.tau = value.parse().map_err(|e| num_err(&e))?,
                "tail_cutoff" => self.tail_cutoff = value.parse().map_err(|e| num_err(&e))?,
                "salt_len" => self.salt_len = value.parse().map_err(|e| num_err(&e))?,
                "lambda_seed" => {
                    let bytes = hex::decode(value).map_err(|e| num_err(&e))?;
                    self.lambda_seed = bytes
                        .try_into()
                        .map_err(|_| bad(format!("lambda_seed must be {LAMBDA_LEN} bytes")))?;
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        Ok(self)
    }

    pub fn from_config_file(path: &Path) -> Result<Self, ParamsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ParamsError::Io(format!("{}: {e}", path.display())))?;
        Self::default().apply_config(&text)
    }

    /// Renders the parameters in the config-file format.
    pub fn to_config_string(&self) -> String {
        format!(
            "n = {}\nq = {}\ntau = {}\ntail_cutoff = {}\nsalt_len = {}\nlambda_seed = {}\n",
            self.n,
            self.q,
            self.tau,
            self.tail_cutoff,
            self.salt_len,
            hex::encode(self.lambda_seed)
        )
    }
}
