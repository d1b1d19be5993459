//! Homomorphic-encryption backend boundary.
//!
//! Everything above this module talks to encrypted data through
//! [`Evaluator`] (public operations) and [`Decryptor`] (secret-key
//! operations). Both are generic over a [`Backend`], so the query circuits
//! run unchanged on the lattice backend and on the plaintext
//! [`reference`] backend used as a test oracle.

pub mod bfv;
pub mod params;
pub mod reference;
pub mod wire;

use std::fmt;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub use params::{HeParams, ParamsId, SecurityLevel, PLAIN_MODULUS, POLY_MODULUS_DEGREE, SLOT_COUNT};

#[derive(Debug, Error)]
pub enum HeError {
    #[error("parameter mismatch: expected {expected}, found {found}")]
    ParamsMismatch { expected: ParamsId, found: ParamsId },
    #[error("no relinearization keys loaded")]
    MissingRelinKeys,
    #[error("no public key loaded")]
    MissingPublicKey,
    #[error("rotation by {0} is not supported by the loaded keys")]
    UnsupportedRotation(usize),
    #[error("decryption failed: noise budget exhausted")]
    NoiseBudgetExhausted,
    #[error("malformed encoding: {0}")]
    Decode(String),
    #[error("invalid slot vector: {0}")]
    InvalidSlots(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// A full row of plaintext slots, each value in `[0, T)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SlotVector(Vec<u64>);

impl SlotVector {
    pub fn zeros() -> Self {
        Self(vec![0; SLOT_COUNT])
    }

    pub fn from_values(values: Vec<u64>, t: u64) -> Result<Self, HeError> {
        if values.len() != SLOT_COUNT {
            return Err(HeError::InvalidSlots(format!(
                "expected {SLOT_COUNT} slots, got {}",
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| v >= t) {
            return Err(HeError::InvalidSlots(format!("slot {i} holds {v}, not below {t}")));
        }
        Ok(Self(values))
    }

    /// Zero-pads `prefix` to a full row.
    pub fn from_prefix(prefix: &[u64], t: u64) -> Result<Self, HeError> {
        if prefix.len() > SLOT_COUNT {
            return Err(HeError::InvalidSlots(format!("{} values exceed the row", prefix.len())));
        }
        let mut values = prefix.to_vec();
        values.resize(SLOT_COUNT, 0);
        Self::from_values(values, t)
    }

    pub(crate) fn from_reduced(values: Vec<u64>) -> Self {
        debug_assert_eq!(values.len(), SLOT_COUNT);
        Self(values)
    }

    pub fn constant(value: u64, t: u64) -> Self {
        Self(vec![value % t; SLOT_COUNT])
    }

    /// Ones on `range`, zeros elsewhere.
    pub fn mask(range: Range<usize>) -> Self {
        let mut v = vec![0; SLOT_COUNT];
        v[range].iter_mut().for_each(|x| *x = 1);
        Self(v)
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u64 {
        self.0[i]
    }

    pub fn into_inner(self) -> Vec<u64> {
        self.0
    }

    pub fn add(&self, other: &Self, t: u64) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| (a + b) % t).collect())
    }

    pub fn sub(&self, other: &Self, t: u64) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| (a + t - b) % t).collect())
    }

    pub fn mul(&self, other: &Self, t: u64) -> Self {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| (a as u128 * b as u128 % t as u128) as u64)
                .collect(),
        )
    }

    pub fn rotate_left(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        v.rotate_left(k % SLOT_COUNT);
        Self(v)
    }

    pub fn rotate_right(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        v.rotate_right(k % SLOT_COUNT);
        Self(v)
    }
}

impl fmt::Debug for SlotVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nonzero = self.0.iter().filter(|&&v| v != 0).count();
        write!(f, "SlotVector({:?}.. , {nonzero} nonzero)", &self.0[..8])
    }
}

/// Remaining noise room of a ciphertext.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseBudget {
    Bits(u32),
    /// The reference backend carries no noise.
    Unbounded,
}

/// Public-key operations of a scheme. Rotation is to the left: slot `i` of
/// the output holds slot `i + k` of the input.
pub trait Backend {
    type Ciphertext: Clone + Send + Sync;

    fn params(&self) -> &HeParams;
    fn encrypt(&self, slots: &SlotVector) -> Result<Self::Ciphertext, HeError>;
    fn add(&self, a: &Self::Ciphertext, b: &Self::Ciphertext) -> Self::Ciphertext;
    fn sub(&self, a: &Self::Ciphertext, b: &Self::Ciphertext) -> Self::Ciphertext;
    fn add_plain(&self, a: &Self::Ciphertext, p: &SlotVector) -> Self::Ciphertext;
    fn mul(&self, a: &Self::Ciphertext, b: &Self::Ciphertext) -> Result<Self::Ciphertext, HeError>;
    fn mul_plain(&self, a: &Self::Ciphertext, p: &SlotVector) -> Self::Ciphertext;
    /// `k` is in `1..SLOT_COUNT`.
    fn rotate_left(&self, a: &Self::Ciphertext, k: usize) -> Result<Self::Ciphertext, HeError>;
    fn encode_payload(&self, a: &Self::Ciphertext) -> Vec<u8>;
    fn decode_payload(&self, bytes: &[u8]) -> Result<Self::Ciphertext, HeError>;
}

/// Secret-key operations.
pub trait SecretBackend {
    type Ciphertext;

    fn params(&self) -> &HeParams;
    fn decrypt(&self, a: &Self::Ciphertext) -> Result<SlotVector, HeError>;
    fn noise_budget(&self, a: &Self::Ciphertext) -> NoiseBudget;
}

/// A ciphertext tagged with its multiplicative depth and parameter set.
#[derive(Clone, Debug)]
pub struct HomomorphicVector<C> {
    payload: C,
    mult_depth: u32,
    params_id: ParamsId,
}

impl<C> HomomorphicVector<C> {
    pub fn mult_depth(&self) -> u32 {
        self.mult_depth
    }

    pub fn params_id(&self) -> ParamsId {
        self.params_id
    }

    pub fn payload(&self) -> &C {
        &self.payload
    }
}

/// Operation counts since the last reset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub encryptions: u64,
    pub additions: u64,
    pub plain_multiplications: u64,
    pub multiplications: u64,
    pub rotations: u64,
}

#[derive(Default)]
struct Counters {
    encryptions: AtomicU64,
    additions: AtomicU64,
    plain_multiplications: AtomicU64,
    multiplications: AtomicU64,
    rotations: AtomicU64,
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

/// Public evaluation with depth tracking and parameter checks.
pub struct Evaluator<B: Backend> {
    backend: B,
    counters: Counters,
}

type Hv<B> = HomomorphicVector<<B as Backend>::Ciphertext>;

impl<B: Backend> Evaluator<B> {
    pub fn new(backend: B) -> Self {
        Self {
            backend,
            counters: Counters::default(),
        }
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn params(&self) -> &HeParams {
        self.backend.params()
    }

    pub fn plain_modulus(&self) -> u64 {
        self.params().plain_modulus()
    }

    fn check(&self, a: &Hv<B>) -> Result<(), HeError> {
        let expected = self.params().id();
        if a.params_id != expected {
            return Err(HeError::ParamsMismatch {
                expected,
                found: a.params_id,
            });
        }
        Ok(())
    }

    fn wrap(&self, payload: B::Ciphertext, mult_depth: u32) -> Hv<B> {
        HomomorphicVector {
            payload,
            mult_depth,
            params_id: self.params().id(),
        }
    }

    pub fn encrypt(&self, slots: &SlotVector) -> Result<Hv<B>, HeError> {
        bump(&self.counters.encryptions);
        Ok(self.wrap(self.backend.encrypt(slots)?, 0))
    }

    pub fn add(&self, a: &Hv<B>, b: &Hv<B>) -> Result<Hv<B>, HeError> {
        self.check(a)?;
        self.check(b)?;
        bump(&self.counters.additions);
        let d = a.mult_depth.max(b.mult_depth);
        Ok(self.wrap(self.backend.add(&a.payload, &b.payload), d))
    }

    pub fn sub(&self, a: &Hv<B>, b: &Hv<B>) -> Result<Hv<B>, HeError> {
        self.check(a)?;
        self.check(b)?;
        bump(&self.counters.additions);
        let d = a.mult_depth.max(b.mult_depth);
        Ok(self.wrap(self.backend.sub(&a.payload, &b.payload), d))
    }

    pub fn add_plain(&self, a: &Hv<B>, p: &SlotVector) -> Result<Hv<B>, HeError> {
        self.check(a)?;
        bump(&self.counters.additions);
        Ok(self.wrap(self.backend.add_plain(&a.payload, p), a.mult_depth))
    }

    pub fn sub_plain(&self, a: &Hv<B>, p: &SlotVector) -> Result<Hv<B>, HeError> {
        let t = self.plain_modulus();
        let neg = SlotVector::zeros().sub(p, t);
        self.add_plain(a, &neg)
    }

    pub fn mul(&self, a: &Hv<B>, b: &Hv<B>) -> Result<Hv<B>, HeError> {
        self.check(a)?;
        self.check(b)?;
        bump(&self.counters.multiplications);
        let d = a.mult_depth.max(b.mult_depth) + 1;
        Ok(self.wrap(self.backend.mul(&a.payload, &b.payload)?, d))
    }

    pub fn mul_plain(&self, a: &Hv<B>, p: &SlotVector) -> Result<Hv<B>, HeError> {
        self.check(a)?;
        bump(&self.counters.plain_multiplications);
        Ok(self.wrap(self.backend.mul_plain(&a.payload, p), a.mult_depth + 1))
    }

    /// Slot `i` of the result holds slot `i + k` of `a`.
    pub fn rotate_left(&self, a: &Hv<B>, k: usize) -> Result<Hv<B>, HeError> {
        self.check(a)?;
        let k = k % SLOT_COUNT;
        if k == 0 {
            return Ok(a.clone());
        }
        bump(&self.counters.rotations);
        Ok(self.wrap(self.backend.rotate_left(&a.payload, k)?, a.mult_depth))
    }

    /// Slot `i + k` of the result holds slot `i` of `a`.
    pub fn rotate_right(&self, a: &Hv<B>, k: usize) -> Result<Hv<B>, HeError> {
        self.rotate_left(a, SLOT_COUNT - k % SLOT_COUNT)
    }

    /// Wire form: a `HEV1` envelope around the depth and the backend bytes.
    pub fn serialize(&self, a: &Hv<B>) -> Vec<u8> {
        let mut body = a.mult_depth.to_le_bytes().to_vec();
        body.extend(self.backend.encode_payload(&a.payload));
        wire::wrap(wire::Magic::Ciphertext, a.params_id, &body)
    }

    pub fn deserialize(&self, bytes: &[u8]) -> Result<Hv<B>, HeError> {
        let body = wire::unwrap(bytes, wire::Magic::Ciphertext, self.params().id())?;
        if body.len() < 4 {
            return Err(HeError::Decode("ciphertext body too short".into()));
        }
        let depth = u32::from_le_bytes(body[..4].try_into().unwrap());
        let payload = self.backend.decode_payload(&body[4..])?;
        Ok(self.wrap(payload, depth))
    }

    pub fn op_counts(&self) -> OpCounts {
        let c = &self.counters;
        OpCounts {
            encryptions: c.encryptions.load(Ordering::Relaxed),
            additions: c.additions.load(Ordering::Relaxed),
            plain_multiplications: c.plain_multiplications.load(Ordering::Relaxed),
            multiplications: c.multiplications.load(Ordering::Relaxed),
            rotations: c.rotations.load(Ordering::Relaxed),
        }
    }

    pub fn reset_op_counts(&self) {
        let c = &self.counters;
        for a in [
            &c.encryptions,
            &c.additions,
            &c.plain_multiplications,
            &c.multiplications,
            &c.rotations,
        ] {
            a.store(0, Ordering::Relaxed);
        }
    }
}

/// Secret-key holder. Only the comparison server constructs one.
pub struct Decryptor<S: SecretBackend> {
    backend: S,
}

impl<S: SecretBackend> Decryptor<S> {
    pub fn new(backend: S) -> Self {
        Self { backend }
    }

    pub fn params(&self) -> &HeParams {
        self.backend.params()
    }

    fn check(&self, a: &HomomorphicVector<S::Ciphertext>) -> Result<(), HeError> {
        let expected = self.params().id();
        if a.params_id != expected {
            return Err(HeError::ParamsMismatch {
                expected,
                found: a.params_id,
            });
        }
        Ok(())
    }

    pub fn decrypt(&self, a: &HomomorphicVector<S::Ciphertext>) -> Result<SlotVector, HeError> {
        self.check(a)?;
        self.backend.decrypt(&a.payload)
    }

    pub fn noise_budget(&self, a: &HomomorphicVector<S::Ciphertext>) -> Result<NoiseBudget, HeError> {
        self.check(a)?;
        Ok(self.backend.noise_budget(&a.payload))
    }
}
