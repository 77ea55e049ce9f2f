//! Monte-Carlo drivers behind the `simulate`, `regev` and `lemma-oracle`
//! commands, plus the stolen-verifier adversary.
//!
//! Every trial draws its entropy from `StreamExpander("LSRP-trial-<i>", master)`,
//! so a run is a pure function of the master seed. Trials are independent and
//! run on the rayon pool when the `parallel` feature is on.

use std::fmt::{self, Write as _};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::modq::{centered, reduce_signed, MatrixError};
use crate::params::ParamsError;
use crate::reconcile::{self, extract_entry, hint};
use crate::regev::{self, RegevError, RegevParams};
use crate::sampler::{GaussianTable, StreamExpander, SEED_LEN};
use crate::srp::{
    self, client_confirmation, kdf, ClientSession, ConfirmationTag, Hello, ProtocolContext,
    ProtocolError, ServerSession, VerifierRecord,
};
use crate::wire::{self, WireError, WireMessage};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("trial count must be at least 1")]
    InvalidTrialCount,
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Reconcile(#[from] crate::reconcile::ReconcileError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Regev(#[from] RegevError),
    #[error("unexpected {0:?} frame")]
    UnexpectedMessage(wire::MessageKind),
}

fn trial_stream(master: &[u8; SEED_LEN], label: &str, i: u64) -> StreamExpander {
    StreamExpander::new(format!("LSRP-{label}-{i}").as_bytes(), master)
}

/// Encodes and decodes a message, as if it had crossed the network.
fn transmit(msg: WireMessage) -> Result<WireMessage, HarnessError> {
    Ok(wire::decode_message(&wire::encode_message(&msg))?)
}

fn transmit_hello(h: Hello) -> Result<Hello, HarnessError> {
    let msg = transmit(h.into())?;
    let kind = msg.kind();
    msg.into_hello()
        .ok_or(HarnessError::UnexpectedMessage(kind))
}

fn transmit_challenge(c: srp::Challenge) -> Result<srp::Challenge, HarnessError> {
    let msg = transmit(c.into())?;
    let kind = msg.kind();
    msg.into_challenge()
        .ok_or(HarnessError::UnexpectedMessage(kind))
}

fn transmit_tag(tag: ConfirmationTag, server: bool) -> Result<ConfirmationTag, HarnessError> {
    let msg = if server {
        WireMessage::ConfirmS(tag)
    } else {
        WireMessage::ConfirmC(tag)
    };
    match transmit(msg)? {
        WireMessage::ConfirmC(t) | WireMessage::ConfirmS(t) => Ok(t),
        other => Err(HarnessError::UnexpectedMessage(other.kind())),
    }
}

fn transmit_record(r: VerifierRecord) -> Result<VerifierRecord, HarnessError> {
    let msg = transmit(r.into())?;
    let kind = msg.kind();
    msg.into_record()
        .ok_or(HarnessError::UnexpectedMessage(kind))
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub trials: u64,
    pub seed: [u8; SEED_LEN],
    pub instrument: bool,
    pub wrong_password: bool,
}

impl SimulationConfig {
    pub fn new(trials: u64, seed: [u8; SEED_LEN]) -> Self {
        Self {
            trials,
            seed,
            instrument: false,
            wrong_password: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarnessReport {
    pub trials: u64,
    pub agreements: u64,
    /// Trials where both confirmation tags verified.
    pub confirmed: u64,
    pub max_noise_inf_norm: Option<u64>,
    /// Entries of `M_C - M_S` whose centered value is odd.
    pub odd_difference_entries: Option<u64>,
    /// Trials whose noise norm exceeded either bound.
    pub bound_violations: Option<u64>,
    pub noise_budget: u64,
    pub tolerance_bound: u64,
    pub wrong_password_mismatches: u64,
    pub runtime: Duration,
}

impl HarnessReport {
    fn rows(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<u64>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        vec![
            ("trials", self.trials.to_string()),
            ("agreements", self.agreements.to_string()),
            ("confirmed", self.confirmed.to_string()),
            ("max_noise_inf_norm", opt(self.max_noise_inf_norm)),
            ("odd_difference_entries", opt(self.odd_difference_entries)),
            ("bound_violations", opt(self.bound_violations)),
            ("noise_budget", self.noise_budget.to_string()),
            ("tolerance_bound", self.tolerance_bound.to_string()),
            (
                "wrong_password_mismatches",
                self.wrong_password_mismatches.to_string(),
            ),
        ]
    }

    /// The report without the wall-clock line; identical across runs with
    /// the same seed.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.rows() {
            let _ = writeln!(out, "{k:<26} {v:>12}");
        }
        out
    }

    pub fn csv_header() -> &'static str {
        "trials,agreements,confirmed,max_noise_inf_norm,odd_difference_entries,bound_violations,noise_budget,tolerance_bound,wrong_password_mismatches,runtime_s"
    }

    pub fn csv_row(&self) -> String {
        let mut fields: Vec<String> = self
            .rows()
            .into_iter()
            .map(|(_, v)| if v == "-" { String::new() } else { v })
            .collect();
        fields.push(format!("{:.3}", self.runtime.as_secs_f64()));
        fields.join(",")
    }
}

impl fmt::Display for HarnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())?;
        writeln!(
            f,
            "{:<26} {:>12.3}",
            "runtime_s",
            self.runtime.as_secs_f64()
        )
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    agreements: u64,
    confirmed: u64,
    max_norm: u64,
    odd: u64,
    violations: u64,
    mismatches: u64,
}

impl Tally {
    fn merge(self, o: Self) -> Self {
        Self {
            agreements: self.agreements + o.agreements,
            confirmed: self.confirmed + o.confirmed,
            max_norm: self.max_norm.max(o.max_norm),
            odd: self.odd + o.odd,
            violations: self.violations + o.violations,
            mismatches: self.mismatches + o.mismatches,
        }
    }
}

/// Outcome of one in-process handshake.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub keys_agree: bool,
    pub server_accepted: bool,
    pub client_accepted: bool,
    pub noise_inf_norm: Option<u64>,
    pub odd_entries: Option<u64>,
    pub client_digest: Option<String>,
    pub server_digest: Option<String>,
}

/// Registers a fresh user and runs one full handshake through the codec.
pub fn run_trial(
    ctx: &Arc<ProtocolContext>,
    stream: &mut StreamExpander,
    instrument: bool,
    wrong_password: bool,
) -> Result<TrialOutcome, HarnessError> {
    let p = ctx.params();
    let id = format!("user-{:016x}", stream.next_u64()).into_bytes();
    let mut password = vec![0u8; 16];
    stream.fill(&mut password);
    let mut salt = vec![0u8; p.salt_len];
    stream.fill(&mut salt);
    let record = srp::register_with_salt(ctx, &id, &salt, &password)?;
    let record = transmit_record(record)?;

    if wrong_password {
        let at = (stream.next_u64() % password.len() as u64) as usize;
        let flip = (stream.next_u64() % 255 + 1) as u8;
        password[at] ^= flip;
    }
    let mut client = ClientSession::with_seed(ctx.clone(), &id, &password, &stream.next_seed())?;
    let mut server = ServerSession::with_seed(ctx.clone(), record, &stream.next_seed())?;

    let hello = transmit_hello(client.hello()?)?;
    let (challenge, server_trace) = server.respond_traced(&hello)?;
    let challenge = transmit_challenge(challenge)?;
    let (m1, client_trace) = client.finish_traced(&challenge)?;

    let (noise_inf_norm, odd_entries) = match (instrument, server_trace) {
        (true, Some(st)) => {
            let diff = client_trace.material.sub(&st.material)?;
            let q = diff.q();
            let odd = diff
                .entries()
                .iter()
                .filter(|&&x| centered(x, q).rem_euclid(2) == 1)
                .count() as u64;
            (Some(diff.inf_norm()), Some(odd))
        }
        _ => (None, None),
    };

    let keys_agree = match (client.session_key(), server.derived_key()) {
        (Some(c), Some(s)) => c.as_bytes() == s.as_bytes(),
        _ => false,
    };
    let server_digest = server.derived_key().map(|k| k.digest());
    let m1 = transmit_tag(m1, false)?;
    let (server_accepted, client_accepted) = match server.confirm_client(&m1) {
        Ok(m2) => {
            let m2 = transmit_tag(m2, true)?;
            (true, client.verify_server(&m2).is_ok())
        }
        Err(ProtocolError::VerificationFailed) => (false, false),
        Err(e) => return Err(e.into()),
    };
    Ok(TrialOutcome {
        keys_agree,
        server_accepted,
        client_accepted,
        noise_inf_norm,
        odd_entries,
        client_digest: client.session_key().map(|k| k.digest()),
        server_digest,
    })
}

#[cfg(feature = "parallel")]
fn fold_trials<F>(trials: u64, f: F) -> Result<Tally, HarnessError>
where
    F: Fn(u64) -> Result<Tally, HarnessError> + Sync + Send,
{
    use rayon::prelude::*;
    (0..trials)
        .into_par_iter()
        .map(f)
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
}

#[cfg(not(feature = "parallel"))]
fn fold_trials<F>(trials: u64, f: F) -> Result<Tally, HarnessError>
where
    F: Fn(u64) -> Result<Tally, HarnessError>,
{
    (0..trials).try_fold(Tally::default(), |acc, i| Ok(acc.merge(f(i)?)))
}

/// Runs `cfg.trials` independent registrations and handshakes.
pub fn simulate(
    ctx: &Arc<ProtocolContext>,
    cfg: &SimulationConfig,
) -> Result<HarnessReport, HarnessError> {
    if cfg.trials == 0 {
        return Err(HarnessError::InvalidTrialCount);
    }
    let p = ctx.params();
    let noise_budget = p.noise_budget();
    let tolerance_bound = p.tolerance().max(0) as u64;
    let limit = noise_budget.min(tolerance_bound);
    let start = Instant::now();
    let tally = fold_trials(cfg.trials, |i| {
        let mut stream = trial_stream(&cfg.seed, "trial", i);
        let o = run_trial(ctx, &mut stream, cfg.instrument, cfg.wrong_password)?;
        let norm = o.noise_inf_norm.unwrap_or(0);
        Ok(Tally {
            agreements: u64::from(o.keys_agree),
            confirmed: u64::from(o.server_accepted && o.client_accepted),
            max_norm: norm,
            odd: o.odd_entries.unwrap_or(0),
            violations: u64::from(norm > limit),
            mismatches: u64::from(cfg.wrong_password && !o.keys_agree && !o.server_accepted),
        })
    })?;
    let instrumented = |v: u64| cfg.instrument.then_some(v);
    Ok(HarnessReport {
        trials: cfg.trials,
        agreements: tally.agreements,
        confirmed: tally.confirmed,
        max_noise_inf_norm: instrumented(tally.max_norm),
        odd_difference_entries: instrumented(tally.odd),
        bound_violations: instrumented(tally.violations),
        noise_budget,
        tolerance_bound,
        wrong_password_mismatches: tally.mismatches,
        runtime: start.elapsed(),
    })
}

/// How the stolen-verifier adversary picks its ephemeral secret.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryStrategy {
    /// `S_C` drawn like an honest client.
    Random,
    /// `S_C = 0`, so `B_C = 2 E_C`.
    Zero,
    /// `B_C = -V + 2 E_C`, cancelling the verifier out of `M_S`. The server's
    /// key material is then small and even, so this strategy succeeds.
    CancelVerifier,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryReport {
    pub strategy: AdversaryStrategy,
    pub trials: u64,
    /// Trials in which the server accepted the forged client tag.
    pub accepted: u64,
}

/// An attacker holding `(id, salt, V)` but not the password plays the client.
/// Without `S_I` it guesses the key material as `S_C (B_S - V) + 2 E_C'`.
pub fn stolen_verifier_attack(
    ctx: &Arc<ProtocolContext>,
    strategy: AdversaryStrategy,
    trials: u64,
    seed: &[u8; SEED_LEN],
) -> Result<AdversaryReport, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::InvalidTrialCount);
    }
    let tally = fold_trials(trials, |i| {
        let mut stream = trial_stream(seed, "adversary", i);
        Ok(Tally {
            confirmed: u64::from(forge_once(ctx, strategy, &mut stream)?),
            ..Tally::default()
        })
    })?;
    Ok(AdversaryReport {
        strategy,
        trials,
        accepted: tally.confirmed,
    })
}

fn forge_once(
    ctx: &Arc<ProtocolContext>,
    strategy: AdversaryStrategy,
    stream: &mut StreamExpander,
) -> Result<bool, HarnessError> {
    let p = ctx.params();
    let (n, q) = (p.n, p.q);
    let id = format!("victim-{:016x}", stream.next_u64()).into_bytes();
    let mut password = vec![0u8; 16];
    stream.fill(&mut password);
    let mut salt = vec![0u8; p.salt_len];
    stream.fill(&mut salt);
    let stolen = srp::register_with_salt(ctx, &id, &salt, &password)?;
    drop(password);

    let mut server = ServerSession::with_seed(ctx.clone(), stolen.clone(), &stream.next_seed())?;
    let secrets = ctx.noise().secret_table();
    let errors = ctx.noise().error_table();
    let s_c = match strategy {
        AdversaryStrategy::Random => secrets.matrix(n, q, stream),
        AdversaryStrategy::Zero | AdversaryStrategy::CancelVerifier => {
            crate::modq::ModQMatrix::zeros(n, q)
        }
    };
    let e_c = errors.matrix(n, q, stream).scale2();
    let mut exchange = s_c.mul(ctx.basis())?.add(&e_c)?;
    if strategy == AdversaryStrategy::CancelVerifier {
        exchange = exchange.sub(&stolen.verifier)?;
    }
    let hello = transmit_hello(Hello {
        id: id.clone(),
        exchange: exchange.clone(),
    })?;
    let challenge = transmit_challenge(server.respond(&hello)?)?;

    let e_c2 = errors.matrix(n, q, stream).scale2();
    let guess = s_c
        .mul(&challenge.exchange.sub(&stolen.verifier)?)?
        .add(&e_c2)?;
    let bits = reconcile::extract(&guess, &challenge.signal)?;
    let key = kdf(&bits, &p.lambda_seed);
    let m1 = transmit_tag(
        client_confirmation(&exchange, &challenge.exchange, &key),
        false,
    )?;
    match server.confirm_client(&m1) {
        Ok(_) => Ok(true),
        Err(ProtocolError::VerificationFailed) => Ok(false),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegevReport {
    pub trials: u64,
    pub correct: u64,
    /// Trials where the accumulated noise `|sum e_i|` stayed below p/4.
    pub certified: u64,
    pub max_accumulated_noise: u64,
    pub runtime: Duration,
}

impl RegevReport {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.trials as f64
    }
}

impl fmt::Display for RegevReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>10}", "trials", self.trials)?;
        writeln!(f, "{:<24} {:>10}", "correct", self.correct)?;
        writeln!(f, "{:<24} {:>10.6}", "accuracy", self.accuracy())?;
        writeln!(f, "{:<24} {:>10}", "certified", self.certified)?;
        writeln!(
            f,
            "{:<24} {:>10}",
            "max_accumulated_noise", self.max_accumulated_noise
        )?;
        writeln!(
            f,
            "{:<24} {:>10.3}",
            "runtime_s",
            self.runtime.as_secs_f64()
        )
    }
}

/// One key pair, then `trials` random bits encrypted and decrypted.
pub fn regev_round_trip(
    rp: &RegevParams,
    trials: u64,
    seed: &[u8; SEED_LEN],
    zero_noise: bool,
) -> Result<RegevReport, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::InvalidTrialCount);
    }
    rp.validate()?;
    let start = Instant::now();
    let table = if zero_noise {
        GaussianTable::point_mass()
    } else {
        rp.noise_table()
    };
    let mut stream = StreamExpander::new(b"LSRP-regev", seed);
    let (keys, errors) = regev::regev_keygen_traced(rp, &table, &mut stream)?;
    let p = rp.p;
    let m = rp.m;
    let (mut correct, mut certified, mut max_noise) = (0, 0, 0);
    let mut coins = vec![0u8; m.div_ceil(8)];
    for _ in 0..trials {
        let bit = (stream.next_u64() & 1) as u8;
        stream.fill(&mut coins);
        let subset: Vec<usize> = (0..m)
            .filter(|&i| (coins[i / 8] >> (7 - i % 8)) & 1 == 1)
            .collect();
        let c = regev::encrypt_with_subset(&keys, bit, &subset);
        let noise = subset
            .iter()
            .map(|&i| errors[i])
            .sum::<i64>()
            .unsigned_abs();
        max_noise = max_noise.max(noise);
        certified += u64::from(4 * noise < p);
        correct += u64::from(regev::regev_decrypt(&keys.secret, &c, p)? == bit);
    }
    Ok(RegevReport {
        trials,
        correct,
        certified,
        max_accumulated_noise: max_noise,
        runtime: start.elapsed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counterexample {
    pub y: u64,
    pub hint_variant: u8,
    pub offset: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaReport {
    pub q: u64,
    pub tolerance: i64,
    pub checked: u64,
    pub violations: u64,
    /// The first few violations found.
    pub counterexamples: Vec<Counterexample>,
}

const MAX_COUNTEREXAMPLES: usize = 8;

/// Checks `E(y + d, S(y)) = E(y, S(y))` for every `y` in `Z_q`, both hint
/// variants and every even `d` with `|d| <= tolerance`. The default tolerance
/// is `floor(q/4) - 2`.
pub fn lemma_oracle(q: u64, tolerance: Option<i64>) -> Result<LemmaReport, HarnessError> {
    if q.is_multiple_of(2) {
        return Err(ParamsError::EvenModulus(q).into());
    }
    if q <= 8 {
        return Err(ParamsError::ModulusTooSmall(q).into());
    }
    if q > 10_000 {
        return Err(ParamsError::ModulusTooLarge(q).into());
    }
    let tolerance = tolerance.unwrap_or((q / 4) as i64 - 2);
    let mut report = LemmaReport {
        q,
        tolerance,
        checked: 0,
        violations: 0,
        counterexamples: Vec::new(),
    };
    for y in 0..q {
        for b in 0..2u8 {
            let sigma = hint(b, y, q);
            let want = extract_entry(y, sigma, q);
            for offset in (-tolerance..=tolerance).filter(|d| d % 2 == 0) {
                report.checked += 1;
                let x = reduce_signed(y as i64 + offset, q);
                if extract_entry(x, sigma, q) != want {
                    report.violations += 1;
                    if report.counterexamples.len() < MAX_COUNTEREXAMPLES {
                        report.counterexamples.push(Counterexample {
                            y,
                            hint_variant: b,
                            offset,
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}
