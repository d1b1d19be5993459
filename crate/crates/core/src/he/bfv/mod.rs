//! Batched BFV over `Z_Q[X]/(X^8192 + 1)` with an RNS ciphertext modulus.
//!
//! Ciphertexts are kept in NTT form, so additions and plaintext products
//! are pointwise and rotations are index permutations followed by one key
//! switch. Ciphertext products are always relinearized.

mod context;
mod keys;
pub mod ntt;
mod sampling;
mod serial;
pub mod zq;

use std::sync::Arc;

use num_bigint::BigUint;

pub use context::BfvContext;
pub use keys::{EvaluationKeys, GaloisKeys, KeyMaterial, PublicKey, SecretKey};

use super::{Backend, HeError, HeParams, NoiseBudget, SecretBackend, SlotVector};
use serial::{check_shape, put_poly, put_shape, Reader};

/// A degree-one ciphertext `(c0, c1)` in NTT form.
#[derive(Clone)]
pub struct BfvCiphertext {
    c0: Vec<u64>,
    c1: Vec<u64>,
}

impl std::fmt::Debug for BfvCiphertext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BfvCiphertext({} residues)", self.c0.len())
    }
}

#[derive(Clone)]
pub struct BfvBackend {
    keys: EvaluationKeys,
}

impl BfvBackend {
    pub fn new(keys: EvaluationKeys) -> Self {
        Self { keys }
    }

    fn ctx(&self) -> &BfvContext {
        &self.keys.ctx
    }

    /// Whether a left rotation by `k` can be evaluated, directly or as a
    /// chain of power-of-two rotations.
    pub fn supports_rotation(&self, k: usize) -> bool {
        self.rotation_plan(k).is_some()
    }

    fn rotation_plan(&self, k: usize) -> Option<Vec<usize>> {
        let keys = &self.keys.galois.keys;
        if keys.contains_key(&k) {
            return Some(vec![k]);
        }
        let mut plan = Vec::new();
        for bit in 0..usize::BITS {
            let step = 1usize << bit;
            if k & step != 0 {
                if !keys.contains_key(&step) {
                    return None;
                }
                plan.push(step);
            }
        }
        Some(plan)
    }

    fn rotate_once(&self, a: &BfvCiphertext, step: usize) -> BfvCiphertext {
        let ctx = self.ctx();
        let key = &self.keys.galois.keys[&step];
        let perm = ctx.galois_permutation(ctx.galois_element(step));
        let mut c0 = ctx.apply_permutation(&a.c0, &perm);
        let mut c1 = ctx.apply_permutation(&a.c1, &perm);
        ctx.intt_q(&mut c1);
        let (d0, d1) = key.switch(ctx, &c1);
        ctx.add_q(&mut c0, &d0);
        BfvCiphertext { c0, c1: d1 }
    }

    /// Scaled plaintext `floor(Q/t) m` in NTT form.
    fn scaled_plain(&self, p: &SlotVector) -> Vec<u64> {
        let ctx = self.ctx();
        let mut m = ctx.scale_plain(&ctx.encode_slots(p));
        ctx.ntt_q(&mut m);
        m
    }
}

impl Backend for BfvBackend {
    type Ciphertext = BfvCiphertext;

    fn params(&self) -> &HeParams {
        self.ctx().params()
    }

    fn encrypt(&self, slots: &SlotVector) -> Result<BfvCiphertext, HeError> {
        let ctx = self.ctx();
        let t = ctx.params().plain_modulus();
        if let Some(v) = slots.as_slice().iter().find(|&&v| v >= t) {
            return Err(HeError::InvalidSlots(format!("value {v} not below {t}")));
        }
        let mut rng = rand::rng();
        let n = ctx.n;
        let mut u = ctx.lift_signed(&sampling::ternary(n, &mut rng));
        ctx.ntt_q(&mut u);

        let mut c0 = ctx.scale_plain(&ctx.encode_slots(slots));
        ctx.add_q(&mut c0, &ctx.lift_signed(&sampling::gaussian(n, &mut rng)));
        ctx.ntt_q(&mut c0);
        ctx.mul_add_q(&mut c0, &self.keys.public.b, &u);

        let mut c1 = ctx.lift_signed(&sampling::gaussian(n, &mut rng));
        ctx.ntt_q(&mut c1);
        ctx.mul_add_q(&mut c1, &self.keys.public.a, &u);
        Ok(BfvCiphertext { c0, c1 })
    }

    fn add(&self, a: &BfvCiphertext, b: &BfvCiphertext) -> BfvCiphertext {
        let mut out = a.clone();
        self.ctx().add_q(&mut out.c0, &b.c0);
        self.ctx().add_q(&mut out.c1, &b.c1);
        out
    }

    fn sub(&self, a: &BfvCiphertext, b: &BfvCiphertext) -> BfvCiphertext {
        let mut out = a.clone();
        self.ctx().sub_q(&mut out.c0, &b.c0);
        self.ctx().sub_q(&mut out.c1, &b.c1);
        out
    }

    fn add_plain(&self, a: &BfvCiphertext, p: &SlotVector) -> BfvCiphertext {
        let mut out = a.clone();
        self.ctx().add_q(&mut out.c0, &self.scaled_plain(p));
        out
    }

    fn mul(&self, a: &BfvCiphertext, b: &BfvCiphertext) -> Result<BfvCiphertext, HeError> {
        let relin = self.keys.relin.as_ref().ok_or(HeError::MissingRelinKeys)?;
        let ctx = self.ctx();

        // Lift all four components to the extended base Q * P.
        let lift = |poly: &[u64]| -> (Vec<u64>, Vec<u64>) {
            let mut coeff = poly.to_vec();
            ctx.intt_q(&mut coeff);
            let mut ext = ctx.extend_q_to_p(&coeff);
            ctx.ntt_p(&mut ext);
            (poly.to_vec(), ext)
        };
        let (a0q, a0p) = lift(&a.c0);
        let (a1q, a1p) = lift(&a.c1);
        let (b0q, b0p) = lift(&b.c0);
        let (b1q, b1p) = lift(&b.c1);

        let mut e0q = ctx.mul_q(&a0q, &b0q);
        let mut e0p = ctx.mul_p(&a0p, &b0p);
        let mut e1q = ctx.mul_q(&a0q, &b1q);
        ctx.mul_add_q(&mut e1q, &a1q, &b0q);
        let mut e1p = ctx.mul_p(&a0p, &b1p);
        ctx.mul_add_p(&mut e1p, &a1p, &b0p);
        let mut e2q = ctx.mul_q(&a1q, &b1q);
        let mut e2p = ctx.mul_p(&a1p, &b1p);

        // round(t/Q * e) for each tensor component, back in base Q.
        let rescale = |q: &mut Vec<u64>, p: &mut Vec<u64>| -> Vec<u64> {
            ctx.intt_q(q);
            ctx.intt_p(p);
            let z = ctx.scale_down_to_p(q, p);
            ctx.convert_p_to_q(&z)
        };
        let mut c0 = rescale(&mut e0q, &mut e0p);
        let mut c1 = rescale(&mut e1q, &mut e1p);
        let c2 = rescale(&mut e2q, &mut e2p);

        let (d0, d1) = relin.switch(ctx, &c2);
        ctx.ntt_q(&mut c0);
        ctx.ntt_q(&mut c1);
        ctx.add_q(&mut c0, &d0);
        ctx.add_q(&mut c1, &d1);
        Ok(BfvCiphertext { c0, c1 })
    }

    fn mul_plain(&self, a: &BfvCiphertext, p: &SlotVector) -> BfvCiphertext {
        let ctx = self.ctx();
        let m = ctx.plain_to_ntt(&ctx.encode_slots(p));
        BfvCiphertext {
            c0: ctx.mul_q(&a.c0, &m),
            c1: ctx.mul_q(&a.c1, &m),
        }
    }

    fn rotate_left(&self, a: &BfvCiphertext, k: usize) -> Result<BfvCiphertext, HeError> {
        let plan = self.rotation_plan(k).ok_or(HeError::UnsupportedRotation(k))?;
        let mut out = a.clone();
        for step in plan {
            out = self.rotate_once(&out, step);
        }
        Ok(out)
    }

    fn encode_payload(&self, a: &BfvCiphertext) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 16 * a.c0.len());
        put_shape(&mut out, self.ctx());
        put_poly(&mut out, &a.c0);
        put_poly(&mut out, &a.c1);
        out
    }

    fn decode_payload(&self, bytes: &[u8]) -> Result<BfvCiphertext, HeError> {
        let ctx = self.ctx();
        let mut r = Reader::new(bytes);
        check_shape(&mut r, ctx)?;
        let c0 = r.poly(ctx)?;
        let c1 = r.poly(ctx)?;
        r.finish()?;
        Ok(BfvCiphertext { c0, c1 })
    }
}

pub struct BfvDecryptor {
    ctx: Arc<BfvContext>,
    secret: Arc<SecretKey>,
}

/// Decryption fails when some coefficient sits this close to a rounding
/// boundary; with noise in budget the fractions are vanishingly small.
const MAX_ROUNDING_FRACTION: u64 = 1 << 62;

impl BfvDecryptor {
    /// Loads a secret key from its `HSK1` envelope.
    pub fn from_bytes(params: &HeParams, bytes: &[u8]) -> Result<Self, HeError> {
        KeyMaterial::load_secret(params, bytes)
    }

    /// `c0 + c1 s` in coefficient form.
    fn phase(&self, a: &BfvCiphertext) -> Vec<u64> {
        let ctx = &*self.ctx;
        let mut x = a.c0.clone();
        ctx.mul_add_q(&mut x, &a.c1, &self.secret.ntt);
        ctx.intt_q(&mut x);
        x
    }
}

impl SecretBackend for BfvDecryptor {
    type Ciphertext = BfvCiphertext;

    fn params(&self) -> &HeParams {
        self.ctx.params()
    }

    fn decrypt(&self, a: &BfvCiphertext) -> Result<SlotVector, HeError> {
        let ctx = &*self.ctx;
        let n = ctx.n;
        let t = ctx.t;
        let x = self.phase(a);
        let mut plain = vec![0u64; n];
        let mut worst = 0u64;
        for (c, out) in plain.iter_mut().enumerate() {
            // t x / Q = sum_i x~_i t / q_i  (mod t), x~_i = x_i (Q/q_i)^-1.
            let mut whole = 0u64;
            let mut frac: u128 = 0;
            for (i, m) in ctx.q.iter().enumerate() {
                let (w, ws) = ctx.q_hat_inv[i];
                let xt = m.mul_shoup(x[i * n + c], w, ws) as u128 * t.value() as u128;
                let q = m.value() as u128;
                whole = t.add(whole, t.reduce((xt / q) as u64));
                frac += ((xt % q) << 64) / q;
            }
            let rounded = ((frac + (1 << 63)) >> 64) as u64;
            let dist = (frac as u64).wrapping_add(1 << 63).abs_diff(1 << 63);
            worst = worst.max(dist);
            *out = t.add(whole, t.reduce(rounded));
        }
        if worst >= MAX_ROUNDING_FRACTION {
            return Err(HeError::NoiseBudgetExhausted);
        }
        Ok(ctx.decode_slots(&plain))
    }

    fn noise_budget(&self, a: &BfvCiphertext) -> NoiseBudget {
        let ctx = &*self.ctx;
        let n = ctx.n;
        let t = ctx.params().plain_modulus();
        let mut x = self.phase(a);
        for (limb, m) in x.chunks_exact_mut(n).zip(&ctx.q) {
            let tm = m.reduce(t);
            for v in limb.iter_mut() {
                *v = m.mul(*v, tm);
            }
        }
        let half = &ctx.q_big >> 1u32;
        let mut worst = BigUint::default();
        for c in 0..n {
            let v = ctx.reconstruct(&x, c);
            let centered = if v > half { &ctx.q_big - v } else { v };
            if centered > worst {
                worst = centered;
            }
        }
        let budget = ctx.q_bits() as i64 - worst.bits() as i64 - 1;
        NoiseBudget::Bits(budget.max(0) as u32)
    }
}
