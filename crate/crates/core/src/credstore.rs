//! Append-only verifier store.
//!
//! The backing file is a plain concatenation of `Register` frames. Loading
//! replays the log into an in-memory index, later records replacing earlier
//! ones with the same id. Only `(id, salt, V)` is ever written.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use thiserror::Error;

use crate::params::ProtocolParams;
use crate::srp::{ProtocolError, VerifierRecord};
use crate::wire::{self, WireError, WireMessage, HEADER_LEN};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("corrupt record at byte {offset}: {reason}")]
    CorruptRecord { offset: u64, reason: String },
    #[error("invalid record: {0}")]
    InvalidRecord(#[from] ProtocolError),
}

/// Where a recovering load stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscardedTail {
    pub offset: u64,
    pub bytes: u64,
    pub reason: String,
}

#[derive(Debug)]
pub struct CredentialStore {
    path: PathBuf,
    params: ProtocolParams,
    index: RwLock<HashMap<Vec<u8>, VerifierRecord>>,
    log: Mutex<File>,
}

struct Replay {
    records: HashMap<Vec<u8>, VerifierRecord>,
    valid_len: u64,
    failure: Option<(u64, String)>,
}

fn replay(bytes: &[u8], params: &ProtocolParams) -> Replay {
    let mut records = HashMap::new();
    let mut pos = 0usize;
    let fail = |pos: usize, reason: String, records| Replay {
        records,
        valid_len: pos as u64,
        failure: Some((pos as u64, reason)),
    };
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        let frame = match rest
            .get(..HEADER_LEN)
            .ok_or(WireError::TruncatedFrame {
                needed: HEADER_LEN,
                available: rest.len(),
            })
            .and_then(wire::decode_header)
        {
            Ok((_, len)) if rest.len() >= HEADER_LEN + len => &rest[..HEADER_LEN + len],
            Ok((_, len)) => {
                let e = WireError::TruncatedFrame {
                    needed: HEADER_LEN + len,
                    available: rest.len(),
                };
                return fail(pos, e.to_string(), records);
            }
            Err(e) => return fail(pos, e.to_string(), records),
        };
        let record = match wire::decode_message(frame).map(WireMessage::into_record) {
            Ok(Some(r)) => r,
            Ok(None) => return fail(pos, "not a Register frame".into(), records),
            Err(e) => return fail(pos, e.to_string(), records),
        };
        if let Err(e) = record.check(params) {
            return fail(pos, e.to_string(), records);
        }
        records.insert(record.id.clone(), record);
        pos += frame.len();
    }
    Replay {
        records,
        valid_len: pos as u64,
        failure: None,
    }
}

impl CredentialStore {
    /// Opens or creates the store. Any undecodable byte in the log is an error.
    pub fn open(path: impl AsRef<Path>, params: &ProtocolParams) -> Result<Self, StoreError> {
        let (file, bytes) = Self::load(path.as_ref())?;
        let r = replay(&bytes, params);
        if let Some((offset, reason)) = r.failure {
            return Err(StoreError::CorruptRecord { offset, reason });
        }
        Ok(Self::assemble(path.as_ref(), params, r.records, file))
    }

    /// Opens the store keeping every record before the first corrupt one.
    /// The damaged tail is cut from the file so later appends stay readable.
    pub fn open_recovering(
        path: impl AsRef<Path>,
        params: &ProtocolParams,
    ) -> Result<(Self, Option<DiscardedTail>), StoreError> {
        let (file, bytes) = Self::load(path.as_ref())?;
        let r = replay(&bytes, params);
        let tail = r.failure.map(|(offset, reason)| DiscardedTail {
            offset,
            bytes: bytes.len() as u64 - offset,
            reason,
        });
        if tail.is_some() {
            file.set_len(r.valid_len)?;
            file.sync_all()?;
        }
        Ok((Self::assemble(path.as_ref(), params, r.records, file), tail))
    }

    fn load(path: &Path) -> Result<(File, Vec<u8>), StoreError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        Ok((file, bytes))
    }

    fn assemble(
        path: &Path,
        params: &ProtocolParams,
        records: HashMap<Vec<u8>, VerifierRecord>,
        file: File,
    ) -> Self {
        Self {
            path: path.to_path_buf(),
            params: params.clone(),
            index: RwLock::new(records),
            log: Mutex::new(file),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends and syncs the record, then makes it visible to `get`.
    pub fn put(&self, record: VerifierRecord) -> Result<(), StoreError> {
        record.check(&self.params)?;
        let frame = wire::encode_message(&WireMessage::from(record.clone()));
        {
            let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
            log.write_all(&frame)?;
            log.sync_data()?;
        }
        self.index
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(record.id.clone(), record);
        Ok(())
    }

    pub fn get(&self, id: &[u8]) -> Option<VerifierRecord> {
        self.index
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All ids, sorted.
    pub fn ids(&self) -> Vec<Vec<u8>> {
        let mut ids: Vec<_> = self
            .index
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }
}
