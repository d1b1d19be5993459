//! The third-party server's durable ciphertext store: one file per user,
//! named by the hex user id, holding the two wrapped ciphertexts.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::ProtocolError;
use crate::encoding::UserId;
use crate::he::wire::{read_header, Magic, HEADER_LEN};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredRecord {
    pub demo: Vec<u8>,
    pub bio: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct TpsStore {
    dir: PathBuf,
}

fn check_ciphertext(bytes: &[u8]) -> Result<(), ProtocolError> {
    let header = read_header(bytes)?;
    if header.magic != Magic::Ciphertext || bytes.len() != HEADER_LEN + header.len {
        return Err(ProtocolError::Malformed("stored value is not a wrapped ciphertext".into()));
    }
    Ok(())
}

impl TpsStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ProtocolError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &UserId) -> PathBuf {
        self.dir.join(id.to_string())
    }

    /// Writes atomically (temporary file, then rename). Replacing an
    /// existing entry is allowed and audit-logged.
    pub fn put(&self, id: &UserId, record: &StoredRecord) -> Result<(), ProtocolError> {
        check_ciphertext(&record.demo)?;
        check_ciphertext(&record.bio)?;
        let path = self.path(id);
        if path.exists() {
            log::warn!(target: "audit", "re-enrollment of user {id} overwrites the stored record");
        }
        let tmp = self.dir.join(format!(".{id}.{}.tmp", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            for part in [&record.demo, &record.bio] {
                f.write_all(&(part.len() as u32).to_le_bytes())?;
                f.write_all(part)?;
            }
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn get(&self, id: &UserId) -> Result<Option<StoredRecord>, ProtocolError> {
        let bytes = match fs::read(self.path(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut rest = &bytes[..];
        let mut take = || -> Result<Vec<u8>, ProtocolError> {
            let bad = || ProtocolError::Malformed(format!("corrupt store entry for {id}"));
            let len = u32::from_le_bytes(rest.get(..4).ok_or_else(bad)?.try_into().unwrap()) as usize;
            let part = rest.get(4..4 + len).ok_or_else(bad)?.to_vec();
            rest = &rest[4 + len..];
            Ok(part)
        };
        let demo = take()?;
        let bio = take()?;
        if !rest.is_empty() {
            return Err(ProtocolError::Malformed(format!("corrupt store entry for {id}")));
        }
        Ok(Some(StoredRecord { demo, bio }))
    }

    /// Ids of all stored users, sorted.
    pub fn user_ids(&self) -> Result<Vec<UserId>, ProtocolError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.parse::<UserId>().ok()) {
                ids.push(id);
            }
        }
        ids.sort();
        Ok(ids)
    }
}
