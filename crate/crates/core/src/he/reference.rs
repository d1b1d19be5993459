//! Plaintext stand-in for the lattice backend. Ciphertexts are the slot
//! vectors themselves, so every circuit can be checked against exact
//! arithmetic mod `T`. Never use it for real data.

use super::{Backend, HeError, HeParams, NoiseBudget, SecretBackend, SlotVector, SLOT_COUNT};

#[derive(Debug, Clone)]
pub struct ReferenceBackend {
    params: HeParams,
}

impl ReferenceBackend {
    pub fn new(params: HeParams) -> Self {
        Self { params }
    }

    pub fn decryptor(&self) -> ReferenceDecryptor {
        ReferenceDecryptor {
            params: self.params.clone(),
        }
    }

    fn t(&self) -> u64 {
        self.params.plain_modulus()
    }
}

impl Backend for ReferenceBackend {
    type Ciphertext = SlotVector;

    fn params(&self) -> &HeParams {
        &self.params
    }

    fn encrypt(&self, slots: &SlotVector) -> Result<SlotVector, HeError> {
        Ok(slots.clone())
    }

    fn add(&self, a: &SlotVector, b: &SlotVector) -> SlotVector {
        a.add(b, self.t())
    }

    fn sub(&self, a: &SlotVector, b: &SlotVector) -> SlotVector {
        a.sub(b, self.t())
    }

    fn add_plain(&self, a: &SlotVector, p: &SlotVector) -> SlotVector {
        a.add(p, self.t())
    }

    fn mul(&self, a: &SlotVector, b: &SlotVector) -> Result<SlotVector, HeError> {
        Ok(a.mul(b, self.t()))
    }

    fn mul_plain(&self, a: &SlotVector, p: &SlotVector) -> SlotVector {
        a.mul(p, self.t())
    }

    fn rotate_left(&self, a: &SlotVector, k: usize) -> Result<SlotVector, HeError> {
        Ok(a.rotate_left(k))
    }

    fn encode_payload(&self, a: &SlotVector) -> Vec<u8> {
        a.as_slice().iter().flat_map(|v| (*v as u32).to_le_bytes()).collect()
    }

    fn decode_payload(&self, bytes: &[u8]) -> Result<SlotVector, HeError> {
        if bytes.len() != 4 * SLOT_COUNT {
            return Err(HeError::Decode(format!("reference payload of {} bytes", bytes.len())));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as u64)
            .collect();
        SlotVector::from_values(values, self.t()).map_err(|e| HeError::Decode(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceDecryptor {
    params: HeParams,
}

impl SecretBackend for ReferenceDecryptor {
    type Ciphertext = SlotVector;

    fn params(&self) -> &HeParams {
        &self.params
    }

    fn decrypt(&self, a: &SlotVector) -> Result<SlotVector, HeError> {
        Ok(a.clone())
    }

    fn noise_budget(&self, _: &SlotVector) -> NoiseBudget {
        NoiseBudget::Unbounded
    }
}
