//! Bit-exact framing for protocol messages.
//!
//! ```text
//! frame   = "LSRP" | version (0x01) | kind (u8) | body_len (u32 BE) | body
//! matrix  = n (u32 BE) | q (u64 BE) | n*n entries, row-major, u32 BE each
//! signal  = n (u32 BE) | ceil(n*n / 8) bytes, row-major, MSB first, zero padded
//! lp(x)   = len (u32 BE) | x
//! ```
//!
//! Bodies: Register = lp(id) lp(salt) matrix; Hello = lp(id) matrix;
//! Challenge = lp(salt) matrix signal; ConfirmC / ConfirmS = 32-byte tag;
//! Error = code (u8) lp(utf-8 message).
//!
//! Every accepted frame re-encodes to the same bytes. Session keys never
//! appear in any message.

use std::io::{Read, Write};

use thiserror::Error;

use crate::modq::ModQMatrix;
use crate::reconcile::SignalMatrix;
use crate::srp::{Challenge, ConfirmationTag, Hello, VerifierRecord};

pub const MAGIC: [u8; 4] = *b"LSRP";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 10;
/// Largest body [`read_frame`] will buffer.
pub const MAX_BODY_LEN: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("truncated frame: needed {needed} bytes, {available} available")]
    TruncatedFrame { needed: usize, available: usize },
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("field out of range: {0}")]
    FieldOutOfRange(&'static str),
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageKind {
    Register = 1,
    Hello = 2,
    Challenge = 3,
    ConfirmC = 4,
    ConfirmS = 5,
    Error = 6,
}

impl TryFrom<u8> for MessageKind {
    type Error = WireError;

    fn try_from(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            1 => Self::Register,
            2 => Self::Hello,
            3 => Self::Challenge,
            4 => Self::ConfirmC,
            5 => Self::ConfirmS,
            6 => Self::Error,
            other => return Err(WireError::UnknownKind(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    Register {
        id: Vec<u8>,
        salt: Vec<u8>,
        verifier: ModQMatrix,
    },
    Hello {
        id: Vec<u8>,
        exchange: ModQMatrix,
    },
    Challenge {
        salt: Vec<u8>,
        exchange: ModQMatrix,
        signal: SignalMatrix,
    },
    ConfirmC(ConfirmationTag),
    ConfirmS(ConfirmationTag),
    Error {
        code: u8,
        message: String,
    },
}

impl WireMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            Self::Register { .. } => MessageKind::Register,
            Self::Hello { .. } => MessageKind::Hello,
            Self::Challenge { .. } => MessageKind::Challenge,
            Self::ConfirmC(_) => MessageKind::ConfirmC,
            Self::ConfirmS(_) => MessageKind::ConfirmS,
            Self::Error { .. } => MessageKind::Error,
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], WireError> {
        if len > self.remaining() {
            return Err(WireError::TruncatedFrame {
                needed: self.pos.saturating_add(len),
                available: self.buf.len(),
            });
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn prefixed(&mut self) -> Result<&'a [u8], WireError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    fn finish(&self) -> Result<(), WireError> {
        match self.remaining() {
            0 => Ok(()),
            extra => Err(WireError::TrailingBytes(extra)),
        }
    }

    fn matrix(&mut self) -> Result<ModQMatrix, WireError> {
        let n = self.u32()? as usize;
        let q = self.u64()?;
        if n == 0 {
            return Err(WireError::FieldOutOfRange("matrix dimension"));
        }
        if !(3..=crate::params::MAX_MODULUS).contains(&q) {
            return Err(WireError::FieldOutOfRange("matrix modulus"));
        }
        let len = n
            .checked_mul(n)
            .and_then(|c| c.checked_mul(4))
            .ok_or(WireError::FieldOutOfRange("matrix dimension"))?;
        let raw = self.take(len)?;
        let entries: Vec<u64> = raw
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as u64)
            .collect();
        ModQMatrix::from_entries(n, q, entries)
            .map_err(|_| WireError::FieldOutOfRange("matrix entry"))
    }

    fn signal(&mut self) -> Result<SignalMatrix, WireError> {
        let n = self.u32()? as usize;
        if n == 0 {
            return Err(WireError::FieldOutOfRange("signal dimension"));
        }
        let len = n
            .checked_mul(n)
            .ok_or(WireError::FieldOutOfRange("signal dimension"))?
            .div_ceil(8);
        let packed = self.take(len)?;
        SignalMatrix::unpack(n, packed).map_err(|_| WireError::FieldOutOfRange("signal padding"))
    }

    fn tag(&mut self) -> Result<ConfirmationTag, WireError> {
        Ok(ConfirmationTag::from_bytes(
            self.take(32)?.try_into().unwrap(),
        ))
    }
}

fn put_prefixed(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(&(field.len() as u32).to_be_bytes());
    out.extend_from_slice(field);
}

fn put_matrix(out: &mut Vec<u8>, m: &ModQMatrix) {
    out.extend_from_slice(&(m.n() as u32).to_be_bytes());
    out.extend_from_slice(&m.q().to_be_bytes());
    out.reserve(4 * m.entries().len());
    for &e in m.entries() {
        out.extend_from_slice(&(e as u32).to_be_bytes());
    }
}

fn put_signal(out: &mut Vec<u8>, s: &SignalMatrix) {
    out.extend_from_slice(&(s.n() as u32).to_be_bytes());
    out.extend_from_slice(&s.pack());
}

pub fn encode_matrix(m: &ModQMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * m.entries().len());
    put_matrix(&mut out, m);
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<ModQMatrix, WireError> {
    let mut c = Cursor::new(bytes);
    let m = c.matrix()?;
    c.finish()?;
    Ok(m)
}

/// Hex of `SHAKE-256(encode_matrix(m))[..32]`; identifies a verifier in logs
/// and golden files.
pub fn matrix_digest(m: &ModQMatrix) -> String {
    hex::encode(crate::sampler::shake::<32>(&[&encode_matrix(m)]))
}

pub fn encode_signal(s: &SignalMatrix) -> Vec<u8> {
    let mut out = Vec::new();
    put_signal(&mut out, s);
    out
}

pub fn decode_signal(bytes: &[u8]) -> Result<SignalMatrix, WireError> {
    let mut c = Cursor::new(bytes);
    let s = c.signal()?;
    c.finish()?;
    Ok(s)
}

pub fn encode_message(msg: &WireMessage) -> Vec<u8> {
    let mut body = Vec::new();
    match msg {
        WireMessage::Register { id, salt, verifier } => {
            put_prefixed(&mut body, id);
            put_prefixed(&mut body, salt);
            put_matrix(&mut body, verifier);
        }
        WireMessage::Hello { id, exchange } => {
            put_prefixed(&mut body, id);
            put_matrix(&mut body, exchange);
        }
        WireMessage::Challenge {
            salt,
            exchange,
            signal,
        } => {
            put_prefixed(&mut body, salt);
            put_matrix(&mut body, exchange);
            put_signal(&mut body, signal);
        }
        WireMessage::ConfirmC(tag) | WireMessage::ConfirmS(tag) => {
            body.extend_from_slice(tag.as_bytes());
        }
        WireMessage::Error { code, message } => {
            body.push(*code);
            put_prefixed(&mut body, message.as_bytes());
        }
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.kind() as u8);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Parses the fixed header, returning the kind and declared body length.
pub fn decode_header(header: &[u8]) -> Result<(MessageKind, usize), WireError> {
    let mut c = Cursor::new(header);
    if c.take(4)? != MAGIC {
        return Err(WireError::BadMagic);
    }
    let version = c.u8()?;
    if version != VERSION {
        return Err(WireError::UnsupportedVersion(version));
    }
    let kind = MessageKind::try_from(c.u8()?)?;
    let len = c.u32()? as usize;
    Ok((kind, len))
}

/// Decodes exactly one frame; the buffer must hold nothing else.
pub fn decode_message(bytes: &[u8]) -> Result<WireMessage, WireError> {
    let header = bytes.get(..HEADER_LEN).ok_or(WireError::TruncatedFrame {
        needed: HEADER_LEN,
        available: bytes.len(),
    })?;
    let (kind, len) = decode_header(header)?;
    let rest = &bytes[HEADER_LEN..];
    if rest.len() < len {
        return Err(WireError::TruncatedFrame {
            needed: HEADER_LEN + len,
            available: bytes.len(),
        });
    }
    if rest.len() > len {
        return Err(WireError::TrailingBytes(rest.len() - len));
    }
    let mut c = Cursor::new(rest);
    let msg = match kind {
        MessageKind::Register => WireMessage::Register {
            id: c.prefixed()?.to_vec(),
            salt: c.prefixed()?.to_vec(),
            verifier: c.matrix()?,
        },
        MessageKind::Hello => WireMessage::Hello {
            id: c.prefixed()?.to_vec(),
            exchange: c.matrix()?,
        },
        MessageKind::Challenge => WireMessage::Challenge {
            salt: c.prefixed()?.to_vec(),
            exchange: c.matrix()?,
            signal: c.signal()?,
        },
        MessageKind::ConfirmC => WireMessage::ConfirmC(c.tag()?),
        MessageKind::ConfirmS => WireMessage::ConfirmS(c.tag()?),
        MessageKind::Error => {
            let code = c.u8()?;
            let message = std::str::from_utf8(c.prefixed()?)
                .map_err(|_| WireError::FieldOutOfRange("error message"))?
                .to_owned();
            WireMessage::Error { code, message }
        }
    };
    c.finish()?;
    Ok(msg)
}

impl From<Hello> for WireMessage {
    fn from(h: Hello) -> Self {
        Self::Hello {
            id: h.id,
            exchange: h.exchange,
        }
    }
}

impl From<Challenge> for WireMessage {
    fn from(c: Challenge) -> Self {
        Self::Challenge {
            salt: c.salt,
            exchange: c.exchange,
            signal: c.signal,
        }
    }
}

impl From<VerifierRecord> for WireMessage {
    fn from(r: VerifierRecord) -> Self {
        Self::Register {
            id: r.id,
            salt: r.salt,
            verifier: r.verifier,
        }
    }
}

impl WireMessage {
    pub fn into_hello(self) -> Option<Hello> {
        match self {
            Self::Hello { id, exchange } => Some(Hello { id, exchange }),
            _ => None,
        }
    }

    pub fn into_challenge(self) -> Option<Challenge> {
        match self {
            Self::Challenge {
                salt,
                exchange,
                signal,
            } => Some(Challenge {
                salt,
                exchange,
                signal,
            }),
            _ => None,
        }
    }

    pub fn into_record(self) -> Option<VerifierRecord> {
        match self {
            Self::Register { id, salt, verifier } => Some(VerifierRecord { id, salt, verifier }),
            _ => None,
        }
    }
}

/// Reads one complete frame from a byte stream and returns its raw bytes.
pub fn read_frame(reader: &mut impl Read) -> Result<Vec<u8>, FrameError> {
    let mut frame = vec![0u8; HEADER_LEN];
    reader.read_exact(&mut frame)?;
    let (_, len) = decode_header(&frame)?;
    if len > MAX_BODY_LEN {
        return Err(WireError::FieldOutOfRange("body length").into());
    }
    frame.resize(HEADER_LEN + len, 0);
    reader.read_exact(&mut frame[HEADER_LEN..])?;
    Ok(frame)
}

/// Reads and decodes one frame.
pub fn read_message(reader: &mut impl Read) -> Result<WireMessage, FrameError> {
    let frame = read_frame(reader)?;
    Ok(decode_message(&frame)?)
}

pub fn write_message(writer: &mut impl Write, msg: &WireMessage) -> std::io::Result<()> {
    writer.write_all(&encode_message(msg))?;
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_layout() {
        let m = ModQMatrix::from_entries(1, 41, vec![7]).unwrap();
        assert_eq!(
            encode_matrix(&m),
            [0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 41, 0, 0, 0, 7]
        );
        assert_eq!(decode_matrix(&encode_matrix(&m)).unwrap(), m);
    }

    #[test]
    fn matrix_entry_at_modulus_rejected() {
        let bytes = [0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 41, 0, 0, 0, 41];
        assert_eq!(
            decode_matrix(&bytes),
            Err(WireError::FieldOutOfRange("matrix entry"))
        );
    }

    #[test]
    fn matrix_huge_dimension_is_truncation() {
        let mut bytes = vec![0xff, 0xff, 0xff, 0xff];
        bytes.extend_from_slice(&41u64.to_be_bytes());
        assert!(decode_matrix(&bytes).is_err());
    }

    #[test]
    fn signal_layout() {
        let s = SignalMatrix::new(2, vec![1, 0, 0, 1]).unwrap();
        assert_eq!(encode_signal(&s), [0, 0, 0, 2, 0x90]);
        assert_eq!(decode_signal(&encode_signal(&s)).unwrap(), s);
        let z = SignalMatrix::zeros(5);
        assert!(encode_signal(&z)[4..].iter().all(|&b| b == 0));
        assert_eq!(encode_signal(&z).len(), 4 + 4);
    }

    #[test]
    fn header_errors() {
        let msg = WireMessage::ConfirmC(ConfirmationTag::from_bytes([9; 32]));
        let good = encode_message(&msg);
        assert_eq!(decode_message(&good).unwrap(), msg);

        let mut bad = good.clone();
        bad[3] = b'Q';
        assert_eq!(decode_message(&bad), Err(WireError::BadMagic));

        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(decode_message(&bad), Err(WireError::UnsupportedVersion(2)));

        let mut bad = good.clone();
        bad[5] = 9;
        assert_eq!(decode_message(&bad), Err(WireError::UnknownKind(9)));

        let mut bad = good.clone();
        bad[9] = 33;
        assert!(matches!(
            decode_message(&bad),
            Err(WireError::TruncatedFrame { .. })
        ));

        let mut bad = good.clone();
        bad.push(0);
        assert_eq!(decode_message(&bad), Err(WireError::TrailingBytes(1)));

        // declared length shorter than the tag: body has leftovers
        let mut bad = good[..HEADER_LEN].to_vec();
        bad[9] = 31;
        bad.extend_from_slice(&[0; 31]);
        assert!(matches!(
            decode_message(&bad),
            Err(WireError::TruncatedFrame { .. })
        ));

        assert!(matches!(
            decode_message(&good[..5]),
            Err(WireError::TruncatedFrame { .. })
        ));
    }

    #[test]
    fn error_message_must_be_utf8() {
        let mut frame = encode_message(&WireMessage::Error {
            code: 3,
            message: "ab".into(),
        });
        let last = frame.len() - 1;
        frame[last] = 0xff;
        assert_eq!(
            decode_message(&frame),
            Err(WireError::FieldOutOfRange("error message"))
        );
    }

    #[test]
    fn read_frame_from_stream() {
        let a = encode_message(&WireMessage::Error {
            code: 1,
            message: "x".into(),
        });
        let b = encode_message(&WireMessage::ConfirmS(ConfirmationTag::from_bytes([1; 32])));
        let joined = [a.clone(), b.clone()].concat();
        let mut r = joined.as_slice();
        assert_eq!(read_frame(&mut r).unwrap(), a);
        assert_eq!(read_frame(&mut r).unwrap(), b);
        assert!(matches!(read_frame(&mut r), Err(FrameError::Io(_))));
    }
}
