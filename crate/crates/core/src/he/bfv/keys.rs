//! Key generation, key switching and key serialization.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{CryptoRng, Rng};

use super::context::{BfvContext, DIGITS_PER_LIMB};
use super::sampling;
use super::serial::{check_shape, put_poly, put_shape, put_u32, Reader};
use crate::he::wire::{self, Magic};
use crate::he::{HeError, HeParams};

pub struct SecretKey {
    coeffs: Vec<i64>,
    pub(crate) ntt: Vec<u64>,
}

impl SecretKey {
    fn from_coeffs(ctx: &BfvContext, coeffs: Vec<i64>) -> Self {
        let mut ntt = ctx.lift_signed(&coeffs);
        ctx.ntt_q(&mut ntt);
        Self { coeffs, ntt }
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.coeffs.len());
        put_u32(&mut out, self.coeffs.len() as u32);
        out.extend(self.coeffs.iter().map(|&c| (c + 1) as u8));
        out
    }

    fn decode(ctx: &BfvContext, bytes: &[u8]) -> Result<Self, HeError> {
        let mut r = Reader::new(bytes);
        if r.u32()? as usize != ctx.n {
            return Err(HeError::Decode("secret key degree mismatch".into()));
        }
        let coeffs = r
            .take(ctx.n)?
            .iter()
            .map(|&b| match b {
                0..=2 => Ok(b as i64 - 1),
                _ => Err(HeError::Decode("secret key coefficient out of range".into())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(Self::from_coeffs(ctx, coeffs))
    }
}

/// Encryption key `(b, a) = (-a s + e, a)`, NTT form.
pub struct PublicKey {
    pub(crate) b: Vec<u64>,
    pub(crate) a: Vec<u64>,
}

/// Switches a component multiplied by some `s'` back to the secret `s`.
/// Entry `(i, k)` encrypts `2^(w_i k) e_i s'`, where `e_i` is the CRT unit
/// of limb `i` and `w_i` the sub-digit width.
pub struct KeySwitchKey {
    parts: Vec<(Vec<u64>, Vec<u64>)>,
}

impl KeySwitchKey {
    fn generate<R: Rng + CryptoRng>(
        ctx: &BfvContext,
        sk: &SecretKey,
        target: &[u64],
        rng: &mut R,
    ) -> Self {
        let n = ctx.n;
        let mut parts = Vec::with_capacity(ctx.digit_count());
        for (i, m) in ctx.q.iter().enumerate() {
            for k in 0..DIGITS_PER_LIMB {
                let a = sampling::uniform(ctx, rng);
                let mut e = ctx.lift_signed(&sampling::gaussian(n, rng));
                ctx.ntt_q(&mut e);
                let mut b = ctx.mul_q(&a, &sk.ntt);
                ctx.neg_q(&mut b);
                ctx.add_q(&mut b, &e);
                let factor = m.pow(2, ctx.digit_bits[i] as u64 * k as u64);
                let limb = &mut b[i * n..(i + 1) * n];
                for (x, &s) in limb.iter_mut().zip(&target[i * n..(i + 1) * n]) {
                    *x = m.add(*x, m.mul(s, factor));
                }
                parts.push((b, a));
            }
        }
        Self { parts }
    }

    /// Returns `(d0, d1)` in NTT form with `d0 + d1 s ~= c s'`, where `c`
    /// is given in coefficient form.
    pub(crate) fn switch(&self, ctx: &BfvContext, c: &[u64]) -> (Vec<u64>, Vec<u64>) {
        let n = ctx.n;
        let l = ctx.limbs();
        let mut acc0 = vec![0u128; n * l];
        let mut acc1 = vec![0u128; n * l];
        let mut digit = vec![0u64; n * l];
        let mut part = self.parts.iter();
        for i in 0..l {
            let w = ctx.digit_bits[i];
            let mask = (1u64 << w) - 1;
            for k in 0..DIGITS_PER_LIMB {
                let src = &c[i * n..(i + 1) * n];
                for dst in digit.chunks_exact_mut(n) {
                    for (d, &x) in dst.iter_mut().zip(src) {
                        *d = (x >> (w as usize * k)) & mask;
                    }
                }
                ctx.ntt_q(&mut digit);
                let (b, a) = part.next().expect("key covers every digit");
                for idx in 0..n * l {
                    let d = digit[idx] as u128;
                    acc0[idx] += d * b[idx] as u128;
                    acc1[idx] += d * a[idx] as u128;
                }
            }
        }
        let reduce = |acc: Vec<u128>| -> Vec<u64> {
            acc.chunks_exact(n)
                .zip(&ctx.q)
                .flat_map(|(limb, m)| limb.iter().map(|&x| m.reduce_u128(x)).collect::<Vec<_>>())
                .collect()
        };
        (reduce(acc0), reduce(acc1))
    }

    fn encode(&self, ctx: &BfvContext, out: &mut Vec<u8>) {
        put_u32(out, self.parts.len() as u32);
        for (b, a) in &self.parts {
            put_poly(out, b);
            put_poly(out, a);
        }
        let _ = ctx;
    }

    fn decode(ctx: &BfvContext, r: &mut Reader<'_>) -> Result<Self, HeError> {
        let count = r.u32()? as usize;
        if count != ctx.digit_count() {
            return Err(HeError::Decode(format!("key switching key with {count} digits")));
        }
        let mut parts = Vec::with_capacity(count);
        for _ in 0..count {
            let b = r.poly(ctx)?;
            let a = r.poly(ctx)?;
            parts.push((b, a));
        }
        Ok(Self { parts })
    }
}

/// Rotation keys indexed by left-rotation step.
pub struct GaloisKeys {
    pub(crate) keys: BTreeMap<usize, KeySwitchKey>,
}

impl GaloisKeys {
    pub fn steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.keys.keys().copied()
    }
}

/// Public material an evaluator needs: encryption, relinearization and
/// rotation keys.
#[derive(Clone)]
pub struct EvaluationKeys {
    pub(crate) ctx: Arc<BfvContext>,
    pub(crate) public: Arc<PublicKey>,
    pub(crate) relin: Option<Arc<KeySwitchKey>>,
    pub(crate) galois: Arc<GaloisKeys>,
}

impl EvaluationKeys {
    pub fn params(&self) -> &HeParams {
        self.ctx.params()
    }

    pub fn public_key_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        put_shape(&mut body, &self.ctx);
        put_poly(&mut body, &self.public.b);
        put_poly(&mut body, &self.public.a);
        wire::wrap(Magic::PublicKey, self.params().id(), &body)
    }

    pub fn relin_key_bytes(&self) -> Option<Vec<u8>> {
        let relin = self.relin.as_ref()?;
        let mut body = Vec::new();
        put_shape(&mut body, &self.ctx);
        relin.encode(&self.ctx, &mut body);
        Some(wire::wrap(Magic::RelinKeys, self.params().id(), &body))
    }

    pub fn galois_key_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        put_shape(&mut body, &self.ctx);
        put_u32(&mut body, self.galois.keys.len() as u32);
        for (&step, key) in &self.galois.keys {
            put_u32(&mut body, step as u32);
            key.encode(&self.ctx, &mut body);
        }
        wire::wrap(Magic::GaloisKeys, self.params().id(), &body)
    }

    /// Loads keys from their envelopes. Relinearization and rotation keys
    /// are optional; without them the corresponding operations fail.
    pub fn from_bytes(
        params: &HeParams,
        public: &[u8],
        relin: Option<&[u8]>,
        galois: Option<&[u8]>,
    ) -> Result<Self, HeError> {
        let ctx = BfvContext::shared(params)?;
        let id = params.id();

        let mut r = Reader::new(wire::unwrap(public, Magic::PublicKey, id)?);
        check_shape(&mut r, &ctx)?;
        let b = r.poly(&ctx)?;
        let a = r.poly(&ctx)?;
        r.finish()?;

        let relin = match relin {
            Some(bytes) => {
                let mut r = Reader::new(wire::unwrap(bytes, Magic::RelinKeys, id)?);
                check_shape(&mut r, &ctx)?;
                let key = KeySwitchKey::decode(&ctx, &mut r)?;
                r.finish()?;
                Some(Arc::new(key))
            }
            None => None,
        };

        let mut keys = BTreeMap::new();
        if let Some(galois) = galois {
            let mut r = Reader::new(wire::unwrap(galois, Magic::GaloisKeys, id)?);
            check_shape(&mut r, &ctx)?;
            let count = r.u32()?;
            for _ in 0..count {
                let step = r.u32()? as usize;
                if step == 0 || step >= ctx.n / 2 {
                    return Err(HeError::Decode(format!("rotation key for step {step}")));
                }
                keys.insert(step, KeySwitchKey::decode(&ctx, &mut r)?);
            }
            r.finish()?;
        }

        Ok(Self {
            ctx,
            public: Arc::new(PublicKey { b, a }),
            relin,
            galois: Arc::new(GaloisKeys { keys }),
        })
    }
}

/// Everything produced by key generation. The secret key leaves this
/// struct only through [`KeyMaterial::export_secret_key`].
pub struct KeyMaterial {
    eval: EvaluationKeys,
    secret: Arc<SecretKey>,
}

impl KeyMaterial {
    /// Generates a fresh key set with rotation keys for `rotation_steps`
    /// (left rotations, each in `1..4096`).
    pub fn generate<R: Rng + CryptoRng>(
        params: &HeParams,
        rotation_steps: &[usize],
        rng: &mut R,
    ) -> Result<Self, HeError> {
        let ctx = BfvContext::shared(params)?;
        let n = ctx.n;
        let sk = SecretKey::from_coeffs(&ctx, sampling::ternary(n, rng));

        let a = sampling::uniform(&ctx, rng);
        let mut e = ctx.lift_signed(&sampling::gaussian(n, rng));
        ctx.ntt_q(&mut e);
        let mut b = ctx.mul_q(&a, &sk.ntt);
        ctx.neg_q(&mut b);
        ctx.add_q(&mut b, &e);

        let s2 = ctx.mul_q(&sk.ntt, &sk.ntt);
        let relin = KeySwitchKey::generate(&ctx, &sk, &s2, rng);

        let mut keys = BTreeMap::new();
        for &step in rotation_steps {
            if step == 0 || step >= n / 2 {
                return Err(HeError::Config(format!("rotation step {step} out of range")));
            }
            let perm = ctx.galois_permutation(ctx.galois_element(step));
            let rotated = ctx.apply_permutation(&sk.ntt, &perm);
            keys.insert(step, KeySwitchKey::generate(&ctx, &sk, &rotated, rng));
        }

        Ok(Self {
            eval: EvaluationKeys {
                ctx,
                public: Arc::new(PublicKey { b, a }),
                relin: Some(Arc::new(relin)),
                galois: Arc::new(GaloisKeys { keys }),
            },
            secret: Arc::new(sk),
        })
    }

    pub fn params(&self) -> &HeParams {
        self.eval.params()
    }

    pub fn evaluation_keys(&self) -> &EvaluationKeys {
        &self.eval
    }

    pub fn backend(&self) -> super::BfvBackend {
        super::BfvBackend::new(self.eval.clone())
    }

    pub fn decryptor(&self) -> super::BfvDecryptor {
        super::BfvDecryptor {
            ctx: self.eval.ctx.clone(),
            secret: self.secret.clone(),
        }
    }

    /// Serializes the secret key. Every call is audit-logged.
    pub fn export_secret_key(&self) -> Vec<u8> {
        log::warn!(target: "audit", "secret key exported (params {})", self.params().id());
        wire::wrap(Magic::SecretKey, self.params().id(), &self.secret.encode())
    }

    pub(crate) fn load_secret(params: &HeParams, bytes: &[u8]) -> Result<super::BfvDecryptor, HeError> {
        let ctx = BfvContext::shared(params)?;
        let body = wire::unwrap(bytes, Magic::SecretKey, params.id())?;
        let secret = Arc::new(SecretKey::decode(&ctx, body)?);
        Ok(super::BfvDecryptor { ctx, secret })
    }
}
