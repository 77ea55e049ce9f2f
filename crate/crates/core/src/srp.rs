//! Registration, client/server handshake state machines, key derivation and
//! key confirmation.
//!
//! Notation: `A` is the public basis derived from the seed lambda, `V` the
//! verifier. Client-side secrets multiply `A` from the left (`S * A`), the
//! server's ephemeral secret from the right (`A * S_S`). Swapping either side
//! breaks agreement, since both parties must land on `(S_I + S_C) * A * S_S`.
//!
//! ```text
//! register:  V   = S_I A + 2 E_I                 (S_I, E_I seeded by Gen(id, salt, pw))
//! client:    B_C = S_C A + 2 E_C
//! server:    B_S = V + A S_S + 2 E_S
//!            M_S = (V + B_C) S_S + 2 E_S'        sigma = signal(M_S)
//! client:    M_C = (S_I + S_C)(B_S - V) + 2 E_C'
//! both:      sk  = KDF(extract(M, sigma), lambda)
//! confirm:   M1  = H("LSRP-m1" | enc(B_C) | enc(B_S) | sk)
//!            M2  = H("LSRP-m2" | enc(B_C) | M1 | sk)
//! ```

use std::fmt;
use std::sync::Arc;

use thiserror::Error;
use zeroize::{Zeroize, Zeroizing};

use crate::modq::{MatrixError, ModQMatrix};
use crate::params::{BoundPolicy, ParamsError, ProtocolParams};
use crate::reconcile::{self, KeyBits, ReconcileError, SignalMatrix};
use crate::sampler::{
    derive_registration_seed, fresh_salt, fresh_seed, shake, uniform_matrix, uniform_matrix_from,
    GaussianTable, SamplerError, StreamExpander, SEED_LEN,
};
use crate::wire::encode_matrix;

pub const KEY_LEN: usize = 32;
pub const TAG_LEN: usize = 32;

const SESSION_TAG: &[u8] = b"LSRP-session";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Reconcile(#[from] ReconcileError),
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("operation not allowed in state {0:?}")]
    InvalidState(SessionState),
    #[error("unknown id")]
    UnknownId,
    #[error("verification failed")]
    VerificationFailed,
}

/// Observable stage of a client or server session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Init,
    /// Client sent its hello.
    HelloSent,
    /// Server answered with its challenge.
    Responded,
    Complete,
    Failed,
}

/// Gaussian tables for secrets and for noise terms.
///
/// Tests swap the noise table for a point mass to remove every `E` term.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    secret: Arc<GaussianTable>,
    error: Arc<GaussianTable>,
}

impl NoiseModel {
    pub fn from_params(p: &ProtocolParams) -> Self {
        let table = Arc::new(GaussianTable::for_params(p));
        Self {
            secret: table.clone(),
            error: table,
        }
    }

    /// Gaussian secrets, all noise matrices zero.
    pub fn zero_noise(p: &ProtocolParams) -> Self {
        Self {
            secret: Arc::new(GaussianTable::for_params(p)),
            error: Arc::new(GaussianTable::point_mass()),
        }
    }

    /// Secrets and noise both zero.
    pub fn degenerate() -> Self {
        let zero = Arc::new(GaussianTable::point_mass());
        Self {
            secret: zero.clone(),
            error: zero,
        }
    }

    pub fn secret_table(&self) -> &GaussianTable {
        &self.secret
    }

    pub fn error_table(&self) -> &GaussianTable {
        &self.error
    }
}

/// Validated parameters together with the public basis `A`.
#[derive(Debug, Clone)]
pub struct ProtocolContext {
    params: ProtocolParams,
    basis: ModQMatrix,
    noise: NoiseModel,
}

impl ProtocolContext {
    pub fn new(params: ProtocolParams) -> Result<Self, ProtocolError> {
        Self::with_policy(params, BoundPolicy::Strict)
    }

    pub fn with_policy(params: ProtocolParams, policy: BoundPolicy) -> Result<Self, ProtocolError> {
        params.check(policy)?;
        let basis = uniform_matrix(&params, b"A", &params.lambda_seed)?;
        let noise = NoiseModel::from_params(&params);
        Ok(Self {
            params,
            basis,
            noise,
        })
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    /// The public basis `A`.
    pub fn basis(&self) -> &ModQMatrix {
        &self.basis
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn secret(&self, stream: &mut StreamExpander) -> Zeroizing<ModQMatrix> {
        Zeroizing::new(
            self.noise
                .secret
                .matrix(self.params.n, self.params.q, stream),
        )
    }

    fn error(&self, stream: &mut StreamExpander) -> Zeroizing<ModQMatrix> {
        Zeroizing::new(
            self.noise
                .error
                .matrix(self.params.n, self.params.q, stream),
        )
    }

    fn expect_shape(&self, m: &ModQMatrix) -> Result<(), ProtocolError> {
        if m.n() != self.params.n {
            return Err(MatrixError::DimensionMismatch(self.params.n, m.n()).into());
        }
        if m.q() != self.params.q {
            return Err(MatrixError::ModulusMismatch(self.params.q, m.q()).into());
        }
        Ok(())
    }
}

/// What the server stores per user: `(id, salt, V)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifierRecord {
    pub id: Vec<u8>,
    pub salt: Vec<u8>,
    pub verifier: ModQMatrix,
}

impl VerifierRecord {
    pub fn check(&self, p: &ProtocolParams) -> Result<(), ProtocolError> {
        if self.id.is_empty() {
            return Err(ProtocolError::EmptyField("id"));
        }
        if self.salt.len() != p.salt_len {
            return Err(ProtocolError::EmptyField("salt"));
        }
        if self.verifier.n() != p.n {
            return Err(MatrixError::DimensionMismatch(p.n, self.verifier.n()).into());
        }
        if self.verifier.q() != p.q {
            return Err(MatrixError::ModulusMismatch(p.q, self.verifier.q()).into());
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey([u8; KEY_LEN]);

impl SessionKey {
    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    /// Short public fingerprint: hex of `SHAKE-256("LSRP-digest" || sk)[..8]`.
    pub fn digest(&self) -> String {
        hex::encode(shake::<8>(&[b"LSRP-digest", &self.0]))
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionKey({})", self.digest())
    }
}

impl Drop for SessionKey {
    fn drop(&mut self) {
        self.0.zeroize();
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConfirmationTag([u8; TAG_LEN]);

impl ConfirmationTag {
    pub fn from_bytes(bytes: [u8; TAG_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; TAG_LEN] {
        &self.0
    }
}

impl fmt::Debug for ConfirmationTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConfirmationTag({})", hex::encode(self.0))
    }
}

/// Client hello: `<id, B_C>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub id: Vec<u8>,
    pub exchange: ModQMatrix,
}

/// Server challenge: `<salt, B_S, sigma>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Challenge {
    pub salt: Vec<u8>,
    pub exchange: ModQMatrix,
    pub signal: SignalMatrix,
}

/// Key material and the combined secret behind it, exposed for instrumented
/// runs only. Client: `secret = S_I + S_C`. Server: `secret = S_S`.
pub struct KeyMaterialTrace {
    pub material: ModQMatrix,
    pub secret: ModQMatrix,
}

impl Drop for KeyMaterialTrace {
    fn drop(&mut self) {
        self.material.zeroize();
        self.secret.zeroize();
    }
}

/// `SHAKE-256("LSRP-kdf" || pack(k) || lambda)[..32]`, bits packed row-major,
/// MSB first, zero padded.
pub fn kdf(k: &KeyBits, lambda_seed: &[u8]) -> SessionKey {
    let packed = Zeroizing::new(k.pack());
    SessionKey(shake::<KEY_LEN>(&[b"LSRP-kdf", &packed, lambda_seed]))
}

/// Client tag `M1 = SHAKE-256("LSRP-m1" || enc(B_C) || enc(B_S) || sk)[..32]`.
pub fn client_confirmation(
    exchange_c: &ModQMatrix,
    exchange_s: &ModQMatrix,
    key: &SessionKey,
) -> ConfirmationTag {
    ConfirmationTag(shake::<TAG_LEN>(&[
        b"LSRP-m1",
        &encode_matrix(exchange_c),
        &encode_matrix(exchange_s),
        key.as_bytes(),
    ]))
}

/// Server tag `M2 = SHAKE-256("LSRP-m2" || enc(B_C) || M1 || sk)[..32]`.
pub fn server_confirmation(
    exchange_c: &ModQMatrix,
    m1: &ConfirmationTag,
    key: &SessionKey,
) -> ConfirmationTag {
    ConfirmationTag(shake::<TAG_LEN>(&[
        b"LSRP-m2",
        &encode_matrix(exchange_c),
        m1.as_bytes(),
        key.as_bytes(),
    ]))
}

/// Compares all bytes regardless of where the first difference is.
pub fn verify_confirmation(expected: &ConfirmationTag, received: &ConfirmationTag) -> bool {
    expected
        .0
        .iter()
        .zip(received.0.iter())
        .fold(0u8, |acc, (a, b)| acc | (a ^ b))
        == 0
}

/// Decoy salt for unknown ids: `SHAKE-256("LSRP-decoy" || id || server_secret)[..salt_len]`.
pub fn decoy_salt(id: &[u8], server_secret: &[u8], salt_len: usize) -> Vec<u8> {
    let mut stream = StreamExpander::new(b"LSRP-decoy", &[id, server_secret].concat());
    let mut salt = vec![0u8; salt_len];
    stream.fill(&mut salt);
    salt
}

/// `(S_I, E_I)` regenerated from `Gen(id || salt || password)`.
fn initial_secrets(
    ctx: &ProtocolContext,
    id: &[u8],
    salt: &[u8],
    password: &[u8],
) -> Result<(Zeroizing<ModQMatrix>, Zeroizing<ModQMatrix>), ProtocolError> {
    let gamma = derive_registration_seed(id, salt, password)?;
    let s_i = ctx.secret(&mut StreamExpander::new(b"SI", gamma.as_ref()));
    let e_i = ctx.error(&mut StreamExpander::new(b"EI", gamma.as_ref()));
    Ok((s_i, e_i))
}

fn compute_verifier(
    ctx: &ProtocolContext,
    id: &[u8],
    salt: &[u8],
    password: &[u8],
) -> Result<(ModQMatrix, Zeroizing<ModQMatrix>), ProtocolError> {
    let (s_i, e_i) = initial_secrets(ctx, id, salt, password)?;
    let verifier = s_i.mul(ctx.basis())?.add(&e_i.scale2())?;
    Ok((verifier, s_i))
}

/// Creates a verifier record with a fresh salt.
pub fn register(
    ctx: &ProtocolContext,
    id: &[u8],
    password: &[u8],
) -> Result<VerifierRecord, ProtocolError> {
    let salt = fresh_salt(ctx.params())?;
    register_with_salt(ctx, id, &salt, password)
}

/// Deterministic registration for a caller-chosen salt.
pub fn register_with_salt(
    ctx: &ProtocolContext,
    id: &[u8],
    salt: &[u8],
    password: &[u8],
) -> Result<VerifierRecord, ProtocolError> {
    if id.is_empty() {
        return Err(ProtocolError::EmptyField("id"));
    }
    if salt.is_empty() {
        return Err(ProtocolError::EmptyField("salt"));
    }
    if password.is_empty() {
        return Err(ProtocolError::EmptyField("password"));
    }
    let (verifier, _s_i) = compute_verifier(ctx, id, salt, password)?;
    Ok(VerifierRecord {
        id: id.to_vec(),
        salt: salt.to_vec(),
        verifier,
    })
}

enum ClientInner {
    Init,
    HelloSent {
        secret: Zeroizing<ModQMatrix>,
        exchange: ModQMatrix,
    },
    Complete {
        key: SessionKey,
        exchange_c: ModQMatrix,
        m1: ConfirmationTag,
    },
    Failed,
}

/// Client side of one handshake.
pub struct ClientSession {
    ctx: Arc<ProtocolContext>,
    id: Vec<u8>,
    password: Zeroizing<Vec<u8>>,
    entropy: StreamExpander,
    inner: ClientInner,
}

impl ClientSession {
    pub fn new(
        ctx: Arc<ProtocolContext>,
        id: &[u8],
        password: &[u8],
    ) -> Result<Self, ProtocolError> {
        let seed = fresh_seed()?;
        Self::with_seed(ctx, id, password, &seed)
    }

    /// Session whose ephemeral randomness is expanded from `seed`.
    pub fn with_seed(
        ctx: Arc<ProtocolContext>,
        id: &[u8],
        password: &[u8],
        seed: &[u8; SEED_LEN],
    ) -> Result<Self, ProtocolError> {
        if id.is_empty() {
            return Err(ProtocolError::EmptyField("id"));
        }
        if password.is_empty() {
            return Err(ProtocolError::EmptyField("password"));
        }
        Ok(Self {
            ctx,
            id: id.to_vec(),
            password: Zeroizing::new(password.to_vec()),
            entropy: StreamExpander::new(SESSION_TAG, seed),
            inner: ClientInner::Init,
        })
    }

    pub fn state(&self) -> SessionState {
        match self.inner {
            ClientInner::Init => SessionState::Init,
            ClientInner::HelloSent { .. } => SessionState::HelloSent,
            ClientInner::Complete { .. } => SessionState::Complete,
            ClientInner::Failed => SessionState::Failed,
        }
    }

    /// Whether the session still holds secret matrices or the password.
    pub fn holds_secrets(&self) -> bool {
        matches!(self.inner, ClientInner::HelloSent { .. }) || !self.password.is_empty()
    }

    pub fn session_key(&self) -> Option<&SessionKey> {
        match &self.inner {
            ClientInner::Complete { key, .. } => Some(key),
            _ => None,
        }
    }

    /// `B_C = S_C A + 2 E_C` with fresh `S_C`, `E_C`.
    pub fn hello(&mut self) -> Result<Hello, ProtocolError> {
        if !matches!(self.inner, ClientInner::Init) {
            return Err(ProtocolError::InvalidState(self.state()));
        }
        let ctx = &self.ctx;
        let s_c = ctx.secret(&mut self.entropy);
        let e_c = ctx.error(&mut self.entropy);
        let exchange = s_c.mul(ctx.basis())?.add(&e_c.scale2())?;
        self.inner = ClientInner::HelloSent {
            secret: s_c,
            exchange: exchange.clone(),
        };
        Ok(Hello {
            id: self.id.clone(),
            exchange,
        })
    }

    /// Derives the session key from the challenge and returns the client tag `M1`.
    pub fn finish(&mut self, challenge: &Challenge) -> Result<ConfirmationTag, ProtocolError> {
        self.finish_traced(challenge).map(|(tag, _)| tag)
    }

    /// Like [`Self::finish`], also returning `M_C` and `S_I + S_C`.
    pub fn finish_traced(
        &mut self,
        challenge: &Challenge,
    ) -> Result<(ConfirmationTag, KeyMaterialTrace), ProtocolError> {
        let ClientInner::HelloSent { .. } = self.inner else {
            return Err(ProtocolError::InvalidState(self.state()));
        };
        let ClientInner::HelloSent { secret, exchange } =
            std::mem::replace(&mut self.inner, ClientInner::Failed)
        else {
            unreachable!()
        };
        let password = std::mem::take(&mut *self.password);
        let password = Zeroizing::new(password);
        let (tag, trace, key) = self.derive(challenge, &secret, &exchange, &password)?;
        self.inner = ClientInner::Complete {
            key,
            exchange_c: exchange,
            m1: tag,
        };
        Ok((tag, trace))
    }

    fn derive(
        &mut self,
        challenge: &Challenge,
        s_c: &ModQMatrix,
        exchange_c: &ModQMatrix,
        password: &[u8],
    ) -> Result<(ConfirmationTag, KeyMaterialTrace, SessionKey), ProtocolError> {
        let ctx = self.ctx.clone();
        ctx.expect_shape(&challenge.exchange)?;
        let (verifier, s_i) = compute_verifier(&ctx, &self.id, &challenge.salt, password)?;
        let e_c2 = ctx.error(&mut self.entropy);
        let secret = s_i.add(s_c)?;
        let material = secret
            .mul(&challenge.exchange.sub(&verifier)?)?
            .add(&e_c2.scale2())?;
        let bits = Zeroizing::new(reconcile::extract(&material, &challenge.signal)?);
        let key = kdf(&bits, &ctx.params.lambda_seed);
        let tag = client_confirmation(exchange_c, &challenge.exchange, &key);
        Ok((tag, KeyMaterialTrace { material, secret }, key))
    }

    /// Checks the server tag `M2`. A mismatch moves the session to `Failed`
    /// and discards the key.
    pub fn verify_server(&mut self, m2: &ConfirmationTag) -> Result<&SessionKey, ProtocolError> {
        let ClientInner::Complete {
            key,
            exchange_c,
            m1,
        } = &self.inner
        else {
            return Err(ProtocolError::InvalidState(self.state()));
        };
        let expected = server_confirmation(exchange_c, m1, key);
        if !verify_confirmation(&expected, m2) {
            self.inner = ClientInner::Failed;
            return Err(ProtocolError::VerificationFailed);
        }
        Ok(self.session_key().expect("complete"))
    }
}

impl Zeroize for KeyBits {
    fn zeroize(&mut self) {
        *self = KeyBits::zeros(self.n());
    }
}

enum ServerInner {
    Init,
    Responded {
        exchange_c: ModQMatrix,
        exchange_s: ModQMatrix,
        key: SessionKey,
    },
    Complete {
        key: SessionKey,
    },
    Failed,
}

enum Identity {
    Registered(VerifierRecord),
    Decoy { id: Vec<u8>, salt: Vec<u8> },
}

/// Server side of one handshake.
pub struct ServerSession {
    ctx: Arc<ProtocolContext>,
    identity: Identity,
    entropy: StreamExpander,
    inner: ServerInner,
}

impl ServerSession {
    pub fn new(ctx: Arc<ProtocolContext>, record: VerifierRecord) -> Result<Self, ProtocolError> {
        let seed = fresh_seed()?;
        Self::with_seed(ctx, record, &seed)
    }

    pub fn with_seed(
        ctx: Arc<ProtocolContext>,
        record: VerifierRecord,
        seed: &[u8; SEED_LEN],
    ) -> Result<Self, ProtocolError> {
        record.check(ctx.params())?;
        Ok(Self {
            ctx,
            identity: Identity::Registered(record),
            entropy: StreamExpander::new(SESSION_TAG, seed),
            inner: ServerInner::Init,
        })
    }

    /// Session for an id with no stored record. It answers with a decoy salt
    /// that is stable per (id, server secret), a uniformly random `B_S` and
    /// random hints, and never accepts a client tag.
    pub fn decoy(
        ctx: Arc<ProtocolContext>,
        id: &[u8],
        server_secret: &[u8],
    ) -> Result<Self, ProtocolError> {
        let seed = fresh_seed()?;
        let salt = decoy_salt(id, server_secret, ctx.params().salt_len);
        Ok(Self {
            ctx,
            identity: Identity::Decoy {
                id: id.to_vec(),
                salt,
            },
            entropy: StreamExpander::new(SESSION_TAG, seed.as_ref()),
            inner: ServerInner::Init,
        })
    }

    pub fn is_decoy(&self) -> bool {
        matches!(self.identity, Identity::Decoy { .. })
    }

    pub fn state(&self) -> SessionState {
        match self.inner {
            ServerInner::Init => SessionState::Init,
            ServerInner::Responded { .. } => SessionState::Responded,
            ServerInner::Complete { .. } => SessionState::Complete,
            ServerInner::Failed => SessionState::Failed,
        }
    }

    /// Whether any key or ephemeral value is still held.
    pub fn holds_secrets(&self) -> bool {
        matches!(self.inner, ServerInner::Responded { .. })
    }

    pub fn session_key(&self) -> Option<&SessionKey> {
        match &self.inner {
            ServerInner::Complete { key } => Some(key),
            _ => None,
        }
    }

    /// The key derived in `respond`, before the client has confirmed it.
    pub fn derived_key(&self) -> Option<&SessionKey> {
        match &self.inner {
            ServerInner::Responded { key, .. } | ServerInner::Complete { key } => Some(key),
            _ => None,
        }
    }

    pub fn respond(&mut self, hello: &Hello) -> Result<Challenge, ProtocolError> {
        self.respond_traced(hello).map(|(c, _)| c)
    }

    /// Like [`Self::respond`], also returning `M_S` and `S_S`. Decoy sessions
    /// return no trace.
    pub fn respond_traced(
        &mut self,
        hello: &Hello,
    ) -> Result<(Challenge, Option<KeyMaterialTrace>), ProtocolError> {
        if !matches!(self.inner, ServerInner::Init) {
            return Err(ProtocolError::InvalidState(self.state()));
        }
        self.inner = ServerInner::Failed;
        let ctx = self.ctx.clone();
        ctx.expect_shape(&hello.exchange)?;
        let p = ctx.params();
        match &self.identity {
            Identity::Decoy { id, salt } => {
                if *id != hello.id {
                    return Err(ProtocolError::UnknownId);
                }
                let exchange = uniform_matrix_from(p.n, p.q, &mut self.entropy);
                let mut hints = vec![0u8; p.n * p.n];
                self.entropy.fill(&mut hints);
                hints.iter_mut().for_each(|b| *b &= 1);
                let signal = SignalMatrix::new(p.n, hints)?;
                let key = SessionKey(self.entropy.next_seed());
                self.inner = ServerInner::Responded {
                    exchange_c: hello.exchange.clone(),
                    exchange_s: exchange.clone(),
                    key,
                };
                Ok((
                    Challenge {
                        salt: salt.clone(),
                        exchange,
                        signal,
                    },
                    None,
                ))
            }
            Identity::Registered(record) => {
                if record.id != hello.id {
                    return Err(ProtocolError::UnknownId);
                }
                let s_s = ctx.secret(&mut self.entropy);
                let e_s = ctx.error(&mut self.entropy);
                let e_s2 = ctx.error(&mut self.entropy);
                let exchange = record
                    .verifier
                    .add(&ctx.basis().mul(&s_s)?)?
                    .add(&e_s.scale2())?;
                let material = record
                    .verifier
                    .add(&hello.exchange)?
                    .mul(&s_s)?
                    .add(&e_s2.scale2())?;
                let signal = reconcile::signal(&material, &mut self.entropy);
                let bits = Zeroizing::new(reconcile::extract(&material, &signal)?);
                let key = kdf(&bits, &p.lambda_seed);
                let challenge = Challenge {
                    salt: record.salt.clone(),
                    exchange: exchange.clone(),
                    signal,
                };
                self.inner = ServerInner::Responded {
                    exchange_c: hello.exchange.clone(),
                    exchange_s: exchange,
                    key,
                };
                let trace = KeyMaterialTrace {
                    material,
                    secret: (*s_s).clone(),
                };
                Ok((challenge, Some(trace)))
            }
        }
    }

    /// Verifies the client tag `M1`; on success returns the server tag `M2`.
    pub fn confirm_client(
        &mut self,
        m1: &ConfirmationTag,
    ) -> Result<ConfirmationTag, ProtocolError> {
        if !matches!(self.inner, ServerInner::Responded { .. }) {
            return Err(ProtocolError::InvalidState(self.state()));
        }
        let ServerInner::Responded {
            exchange_c,
            exchange_s,
            key,
        } = std::mem::replace(&mut self.inner, ServerInner::Failed)
        else {
            unreachable!()
        };
        let expected = client_confirmation(&exchange_c, &exchange_s, &key);
        if self.is_decoy() || !verify_confirmation(&expected, m1) {
            return Err(ProtocolError::VerificationFailed);
        }
        let m2 = server_confirmation(&exchange_c, m1, &key);
        self.inner = ServerInner::Complete { key };
        Ok(m2)
    }
}
