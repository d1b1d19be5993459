use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bfv::zq::ntt_primes;

/// Ring degree of every parameter set.
pub const POLY_MODULUS_DEGREE: usize = 8192;
/// Slots in one batching row; the logical vector length.
pub const SLOT_COUNT: usize = POLY_MODULUS_DEGREE / 2;
/// The plaintext modulus `T`, identical at every security level. `select`
/// recomputes it by search and checks it against this value.
pub const PLAIN_MODULUS: u64 = 4_079_617;

/// Target security level; selects the coefficient-modulus budget from the
/// homomorphic encryption standard's table for degree 8192.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum SecurityLevel {
    Bits128,
    Bits192,
    Bits256,
}

impl SecurityLevel {
    pub fn bits(self) -> u16 {
        match self {
            Self::Bits128 => 128,
            Self::Bits192 => 192,
            Self::Bits256 => 256,
        }
    }

    /// Bit sizes of the ciphertext modulus primes. The totals (218, 152 and
    /// 118 bits) are the largest moduli allowed at degree 8192.
    fn coeff_modulus_bits(self) -> &'static [u32] {
        match self {
            Self::Bits128 => &[54, 54, 55, 55],
            Self::Bits192 => &[50, 51, 51],
            Self::Bits256 => &[59, 59],
        }
    }
}

impl TryFrom<u16> for SecurityLevel {
    type Error = String;

    fn try_from(bits: u16) -> Result<Self, Self::Error> {
        match bits {
            128 => Ok(Self::Bits128),
            192 => Ok(Self::Bits192),
            256 => Ok(Self::Bits256),
            other => Err(format!("unsupported security level {other} (expected 128, 192 or 256)")),
        }
    }
}

impl From<SecurityLevel> for u16 {
    fn from(level: SecurityLevel) -> u16 {
        level.bits()
    }
}

impl fmt::Display for SecurityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-bit", self.bits())
    }
}

/// Identifies a parameter set on the wire (first four bytes of a SHA-256
/// over the canonical parameter encoding).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamsId(pub u32);

impl fmt::Display for ParamsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeParams {
    degree: usize,
    plain_modulus: u64,
    security: SecurityLevel,
    coeff_moduli: Vec<u64>,
    id: ParamsId,
}

impl HeParams {
    /// The parameter set for `security`: degree 8192, the largest 22-bit
    /// prime `T = 1 mod 16384`, and a coefficient modulus sized for the level.
    pub fn select(security: SecurityLevel) -> Self {
        let step = 2 * POLY_MODULUS_DEGREE as u64;
        let plain_modulus = ntt_primes(22, step, 1, &[])[0];
        debug_assert_eq!(plain_modulus, PLAIN_MODULUS);
        let mut coeff_moduli: Vec<u64> = Vec::new();
        for &bits in security.coeff_modulus_bits() {
            let mut exclude = coeff_moduli.clone();
            exclude.push(plain_modulus);
            coeff_moduli.push(ntt_primes(bits, step, 1, &exclude)[0]);
        }
        let id = Self::compute_id(POLY_MODULUS_DEGREE, plain_modulus, security, &coeff_moduli);
        Self {
            degree: POLY_MODULUS_DEGREE,
            plain_modulus,
            security,
            coeff_moduli,
            id,
        }
    }

    fn compute_id(degree: usize, t: u64, security: SecurityLevel, moduli: &[u64]) -> ParamsId {
        let mut h = Sha256::new();
        h.update(b"ppid-bfv");
        h.update((degree as u32).to_le_bytes());
        h.update(t.to_le_bytes());
        h.update(security.bits().to_le_bytes());
        for q in moduli {
            h.update(q.to_le_bytes());
        }
        let digest = h.finalize();
        ParamsId(u32::from_le_bytes([digest[0], digest[1], digest[2], digest[3]]))
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn slot_count(&self) -> usize {
        self.degree / 2
    }

    /// The plaintext modulus `T`.
    pub fn plain_modulus(&self) -> u64 {
        self.plain_modulus
    }

    pub fn security(&self) -> SecurityLevel {
        self.security
    }

    pub fn coeff_moduli(&self) -> &[u64] {
        &self.coeff_moduli
    }

    pub fn coeff_modulus_bits(&self) -> u32 {
        self.coeff_moduli.iter().map(|q| 64 - q.leading_zeros()).sum()
    }

    pub fn id(&self) -> ParamsId {
        self.id
    }
}
