//! What each role is allowed to load, and the on-disk key directory.
//!
//! Every process builds its registry once at startup from its role. Key
//! loaders take the registry and refuse material the role may not hold,
//! so the third-party server has no code path that reads the secret key.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::he::bfv::{BfvDecryptor, EvaluationKeys, KeyMaterial};
use crate::he::{HeParams, SecurityLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Cs,
    Tps,
    Sp,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cs => "cs",
            Self::Tps => "tps",
            Self::Sp => "sp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Capability {
    GenerateKeys,
    LoadSecretKey,
    Decrypt,
    LoadPublicKey,
    Encrypt,
    LoadEvaluationKeys,
    Evaluate,
    StoreCiphertexts,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityRegistry {
    pub role: Role,
    pub capabilities: BTreeSet<Capability>,
}

impl CapabilityRegistry {
    pub fn for_role(role: Role) -> Self {
        use Capability::*;
        let caps: &[Capability] = match role {
            Role::Cs => &[GenerateKeys, LoadSecretKey, Decrypt, LoadPublicKey, Encrypt],
            Role::Tps => &[LoadEvaluationKeys, Evaluate, StoreCiphertexts],
            Role::Sp => &[LoadPublicKey, Encrypt],
        };
        Self {
            role,
            capabilities: caps.iter().copied().collect(),
        }
    }

    pub fn allows(&self, cap: Capability) -> bool {
        self.capabilities.contains(&cap)
    }

    pub fn require(&self, capability: Capability) -> Result<(), ProtocolError> {
        if self.allows(capability) {
            Ok(())
        } else {
            Err(ProtocolError::Capability {
                role: self.role,
                capability,
            })
        }
    }
}

/// Metadata written next to the keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyInfo {
    pub requested: SecurityLevel,
    pub security: SecurityLevel,
    pub fallback_reason: Option<String>,
    pub rotation_steps: Vec<usize>,
}

/// A directory holding `info.json`, `public.key`, `relin.key`,
/// `galois.key` and, on the central server only, `secret.key`.
#[derive(Debug, Clone)]
pub struct KeyDir {
    dir: PathBuf,
}

impl KeyDir {
    pub const INFO: &'static str = "info.json";
    pub const PUBLIC: &'static str = "public.key";
    pub const RELIN: &'static str = "relin.key";
    pub const GALOIS: &'static str = "galois.key";
    pub const SECRET: &'static str = "secret.key";

    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, reg: &CapabilityRegistry, keys: &KeyMaterial, info: &KeyInfo) -> Result<(), ProtocolError> {
        reg.require(Capability::GenerateKeys)?;
        fs::create_dir_all(&self.dir)?;
        let ek = keys.evaluation_keys();
        fs::write(self.file(Self::INFO), serde_json::to_vec_pretty(info).expect("serializable"))?;
        fs::write(self.file(Self::PUBLIC), ek.public_key_bytes())?;
        if let Some(rk) = ek.relin_key_bytes() {
            fs::write(self.file(Self::RELIN), rk)?;
        }
        fs::write(self.file(Self::GALOIS), ek.galois_key_bytes())?;
        fs::write(self.file(Self::SECRET), keys.export_secret_key())?;
        Ok(())
    }

    pub fn info(&self) -> Result<KeyInfo, ProtocolError> {
        let bytes = fs::read(self.file(Self::INFO))?;
        serde_json::from_slice(&bytes).map_err(|e| ProtocolError::Malformed(format!("{}: {e}", Self::INFO)))
    }

    pub fn params(&self) -> Result<HeParams, ProtocolError> {
        Ok(HeParams::select(self.info()?.security))
    }

    /// Public key only: enough to encrypt.
    pub fn public_keys(&self, reg: &CapabilityRegistry) -> Result<EvaluationKeys, ProtocolError> {
        reg.require(Capability::LoadPublicKey)?;
        let params = self.params()?;
        let pk = fs::read(self.file(Self::PUBLIC))?;
        Ok(EvaluationKeys::from_bytes(&params, &pk, None, None)?)
    }

    /// Public, relinearization and rotation keys.
    pub fn evaluation_keys(&self, reg: &CapabilityRegistry) -> Result<EvaluationKeys, ProtocolError> {
        reg.require(Capability::LoadEvaluationKeys)?;
        let params = self.params()?;
        let pk = fs::read(self.file(Self::PUBLIC))?;
        let rk = fs::read(self.file(Self::RELIN))?;
        let gk = fs::read(self.file(Self::GALOIS))?;
        Ok(EvaluationKeys::from_bytes(&params, &pk, Some(&rk), Some(&gk))?)
    }

    pub fn secret_key(&self, reg: &CapabilityRegistry) -> Result<BfvDecryptor, ProtocolError> {
        reg.require(Capability::LoadSecretKey)?;
        let params = self.params()?;
        let bytes = fs::read(self.file(Self::SECRET))?;
        Ok(BfvDecryptor::from_bytes(&params, &bytes)?)
    }
}
