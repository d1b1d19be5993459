//! Precomputed RNS data for one parameter set.
//!
//! Ciphertexts live modulo `Q = q_0 ... q_{L-1}`. Multiplication lifts the
//! operands into the extended base `Q * P`, where `P` is a product of 60-bit
//! primes large enough to hold `t * N * Q`, scales the tensor by `t / Q`
//! landing in base `P`, and converts back to `Q`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

use super::ntt::{bit_reverse, NttTable};
use super::zq::{ntt_primes, Modulus};
use crate::he::params::{HeParams, ParamsId};
use crate::he::{HeError, SlotVector};

/// Sub-digits each RNS limb is split into during key switching.
pub(crate) const DIGITS_PER_LIMB: usize = 2;
const AUX_PRIME_BITS: u32 = 60;

pub struct BfvContext {
    params: HeParams,
    pub(crate) n: usize,
    pub(crate) q: Vec<Modulus>,
    pub(crate) q_ntt: Vec<NttTable>,
    pub(crate) p: Vec<Modulus>,
    pub(crate) p_ntt: Vec<NttTable>,
    pub(crate) t: Modulus,
    t_ntt: NttTable,
    row0_index: Vec<usize>,
    row1_index: Vec<usize>,
    pub(crate) delta_q: Vec<u64>,
    // Q mod t, for the rounding correction of scaled plaintexts.
    q_mod_t: u64,
    pub(crate) q_big: BigUint,
    pub(crate) q_hat_big: Vec<BigUint>,
    // (Q/q_i)^-1 mod q_i, with Shoup constants.
    pub(crate) q_hat_inv: Vec<(u64, u64)>,
    q_inv_f64: Vec<f64>,
    q_hat_mod_p: Vec<Vec<u64>>,
    neg_q_mod_p: Vec<u64>,
    r_hat_inv_q: Vec<(u64, u64)>,
    scale_int: Vec<Vec<u64>>,
    scale_frac: Vec<u64>,
    scale_p: Vec<(u64, u64)>,
    p_hat_inv: Vec<(u64, u64)>,
    p_inv_f64: Vec<f64>,
    p_hat_mod_q: Vec<Vec<u64>>,
    neg_p_mod_q: Vec<u64>,
    pub(crate) digit_bits: Vec<u32>,
}

fn big_mod(x: &BigUint, m: u64) -> u64 {
    (x % m).to_u64().expect("residue fits a word")
}

fn with_shoup(q: &Modulus, w: u64) -> (u64, u64) {
    (w, q.shoup(w))
}

impl BfvContext {
    /// Shared context for `params`, built once per process.
    pub fn shared(params: &HeParams) -> Result<Arc<Self>, HeError> {
        static CACHE: OnceLock<Mutex<HashMap<ParamsId, Arc<BfvContext>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(ctx) = cache.lock().unwrap().get(&params.id()) {
            return Ok(ctx.clone());
        }
        let ctx = Arc::new(Self::new(params.clone())?);
        cache.lock().unwrap().insert(params.id(), ctx.clone());
        Ok(ctx)
    }

    pub fn new(params: HeParams) -> Result<Self, HeError> {
        let n = params.degree();
        let two_n = 2 * n as u64;
        let t_val = params.plain_modulus();
        if !super::zq::is_prime(t_val) || t_val % two_n != 1 {
            return Err(HeError::Config(format!(
                "plaintext modulus {t_val} does not support batching at degree {n}"
            )));
        }
        for &q in params.coeff_moduli() {
            if !super::zq::is_prime(q) || q % two_n != 1 || q >= 1 << 62 {
                return Err(HeError::Config(format!("coefficient modulus {q} is not NTT-friendly")));
            }
        }
        let t = Modulus::new(t_val);
        let q: Vec<Modulus> = params.coeff_moduli().iter().map(|&v| Modulus::new(v)).collect();
        let q_big: BigUint = q.iter().map(|m| BigUint::from(m.value())).product();
        let q_bits = q_big.bits();

        // P must exceed 2 * t * N * Q (the scaled tensor) with some slack.
        let need_bits = q_bits + 64 - t_val.leading_zeros() as u64 + n.trailing_zeros() as u64 + 4;
        let aux_count = need_bits.div_ceil(AUX_PRIME_BITS as u64 - 1) as usize;
        let mut exclude: Vec<u64> = params.coeff_moduli().to_vec();
        exclude.push(t_val);
        let p: Vec<Modulus> = ntt_primes(AUX_PRIME_BITS, two_n, aux_count, &exclude)
            .into_iter()
            .map(Modulus::new)
            .collect();
        let p_big: BigUint = p.iter().map(|m| BigUint::from(m.value())).product();
        let r_big = &q_big * &p_big;

        let q_ntt = q.iter().map(|&m| NttTable::new(m, n)).collect();
        let p_ntt = p.iter().map(|&m| NttTable::new(m, n)).collect();
        let t_ntt = NttTable::new(t, n);

        let log_n = n.trailing_zeros();
        let mut row0_index = Vec::with_capacity(n / 2);
        let mut row1_index = Vec::with_capacity(n / 2);
        let mut e = 1u64;
        for _ in 0..n / 2 {
            row0_index.push(bit_reverse(((e - 1) / 2) as usize, log_n));
            let mirror = two_n - e;
            row1_index.push(bit_reverse(((mirror - 1) / 2) as usize, log_n));
            e = e * 3 % two_n;
        }

        let delta = &q_big / t_val;
        let delta_q = q.iter().map(|m| big_mod(&delta, m.value())).collect();
        let q_mod_t = big_mod(&q_big, t_val);

        let q_hat_big: Vec<BigUint> = q.iter().map(|m| &q_big / m.value()).collect();
        let q_hat_inv = q
            .iter()
            .zip(&q_hat_big)
            .map(|(m, hat)| with_shoup(m, m.inv(big_mod(hat, m.value())).unwrap()))
            .collect();
        let q_inv_f64 = q.iter().map(|m| 1.0 / m.value() as f64).collect();
        let q_hat_mod_p = q_hat_big
            .iter()
            .map(|hat| p.iter().map(|pj| big_mod(hat, pj.value())).collect())
            .collect();
        let neg_q_mod_p = p.iter().map(|pj| pj.neg(big_mod(&q_big, pj.value()))).collect();

        let t_p = &p_big * t_val;
        let r_hat_inv_q = q
            .iter()
            .map(|m| with_shoup(m, m.inv(big_mod(&(&r_big / m.value()), m.value())).unwrap()))
            .collect();
        let scale_int = q
            .iter()
            .map(|m| {
                let whole = &t_p / m.value();
                p.iter().map(|pj| big_mod(&whole, pj.value())).collect()
            })
            .collect();
        let scale_frac = q
            .iter()
            .map(|m| {
                let rem = big_mod(&t_p, m.value());
                (((rem as u128) << 64) / m.value() as u128) as u64
            })
            .collect();
        let scale_p = p
            .iter()
            .map(|pj| {
                let pv = pj.value();
                let p_hat = &p_big / pv;
                let r_hat_inv = pj.inv(big_mod(&(&r_big / pv), pv)).unwrap();
                let w = pj.mul(pj.mul(t_val % pv, big_mod(&p_hat, pv)), r_hat_inv);
                with_shoup(pj, w)
            })
            .collect();

        let p_hat_big: Vec<BigUint> = p.iter().map(|m| &p_big / m.value()).collect();
        let p_hat_inv = p
            .iter()
            .zip(&p_hat_big)
            .map(|(m, hat)| with_shoup(m, m.inv(big_mod(hat, m.value())).unwrap()))
            .collect();
        let p_inv_f64 = p.iter().map(|m| 1.0 / m.value() as f64).collect();
        let p_hat_mod_q = p_hat_big
            .iter()
            .map(|hat| q.iter().map(|qi| big_mod(hat, qi.value())).collect())
            .collect();
        let neg_p_mod_q = q.iter().map(|qi| qi.neg(big_mod(&p_big, qi.value()))).collect();

        let digit_bits = q
            .iter()
            .map(|m| m.bits().div_ceil(DIGITS_PER_LIMB as u32))
            .collect();

        Ok(Self {
            params,
            n,
            q,
            q_ntt,
            p,
            p_ntt,
            t,
            t_ntt,
            row0_index,
            row1_index,
            delta_q,
            q_mod_t,
            q_big,
            q_hat_big,
            q_hat_inv,
            q_inv_f64,
            q_hat_mod_p,
            neg_q_mod_p,
            r_hat_inv_q,
            scale_int,
            scale_frac,
            scale_p,
            p_hat_inv,
            p_inv_f64,
            p_hat_mod_q,
            neg_p_mod_q,
            digit_bits,
        })
    }

    pub fn params(&self) -> &HeParams {
        &self.params
    }

    pub(crate) fn limbs(&self) -> usize {
        self.q.len()
    }

    pub(crate) fn digit_count(&self) -> usize {
        self.q.len() * DIGITS_PER_LIMB
    }

    pub(crate) fn ntt_q(&self, poly: &mut [u64]) {
        for (limb, table) in poly.chunks_exact_mut(self.n).zip(&self.q_ntt) {
            table.forward(limb);
        }
    }

    pub(crate) fn intt_q(&self, poly: &mut [u64]) {
        for (limb, table) in poly.chunks_exact_mut(self.n).zip(&self.q_ntt) {
            table.inverse(limb);
        }
    }

    /// Embeds small signed coefficients into every limb (coefficient form).
    pub(crate) fn lift_signed(&self, coeffs: &[i64]) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.n * self.q.len());
        for m in &self.q {
            out.extend(coeffs.iter().map(|&c| m.reduce_i64(c)));
        }
        out
    }

    pub(crate) fn add_q(&self, a: &mut [u64], b: &[u64]) {
        for ((la, lb), m) in a.chunks_exact_mut(self.n).zip(b.chunks_exact(self.n)).zip(&self.q) {
            for (x, &y) in la.iter_mut().zip(lb) {
                *x = m.add(*x, y);
            }
        }
    }

    pub(crate) fn sub_q(&self, a: &mut [u64], b: &[u64]) {
        for ((la, lb), m) in a.chunks_exact_mut(self.n).zip(b.chunks_exact(self.n)).zip(&self.q) {
            for (x, &y) in la.iter_mut().zip(lb) {
                *x = m.sub(*x, y);
            }
        }
    }

    pub(crate) fn neg_q(&self, a: &mut [u64]) {
        for (la, m) in a.chunks_exact_mut(self.n).zip(&self.q) {
            for x in la.iter_mut() {
                *x = m.neg(*x);
            }
        }
    }

    /// Pointwise product of two NTT-form polynomials.
    pub(crate) fn mul_q(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut out = Vec::with_capacity(a.len());
        for ((la, lb), m) in a.chunks_exact(self.n).zip(b.chunks_exact(self.n)).zip(&self.q) {
            out.extend(la.iter().zip(lb).map(|(&x, &y)| m.mul(x, y)));
        }
        out
    }

    /// `acc += a * b` pointwise in NTT form.
    pub(crate) fn mul_add_q(&self, acc: &mut [u64], a: &[u64], b: &[u64]) {
        for (((lc, la), lb), m) in acc
            .chunks_exact_mut(self.n)
            .zip(a.chunks_exact(self.n))
            .zip(b.chunks_exact(self.n))
            .zip(&self.q)
        {
            for ((c, &x), &y) in lc.iter_mut().zip(la).zip(lb) {
                *c = m.add(*c, m.mul(x, y));
            }
        }
    }

    /// Batches a slot vector into a plaintext polynomial modulo `t`. The
    /// vector fills the first batching row and is mirrored into the second.
    pub(crate) fn encode_slots(&self, slots: &SlotVector) -> Vec<u64> {
        let mut evals = vec![0u64; self.n];
        for (j, &v) in slots.as_slice().iter().enumerate() {
            evals[self.row0_index[j]] = v;
            evals[self.row1_index[j]] = v;
        }
        self.t_ntt.inverse(&mut evals);
        evals
    }

    /// Reads the first batching row of a plaintext polynomial.
    pub(crate) fn decode_slots(&self, poly: &[u64]) -> SlotVector {
        let mut evals = poly.to_vec();
        self.t_ntt.forward(&mut evals);
        let values = self.row0_index.iter().map(|&k| evals[k]).collect();
        SlotVector::from_reduced(values)
    }

    /// Centered lift of a mod-`t` polynomial into NTT form over `Q`.
    pub(crate) fn plain_to_ntt(&self, poly_t: &[u64]) -> Vec<u64> {
        let centered: Vec<i64> = poly_t.iter().map(|&c| self.t.center(c)).collect();
        let mut out = self.lift_signed(&centered);
        self.ntt_q(&mut out);
        out
    }

    /// `round(Q m / t)` in coefficient form, computed as
    /// `floor(Q/t) m + round((Q mod t) m / t)`.
    pub(crate) fn scale_plain(&self, poly_t: &[u64]) -> Vec<u64> {
        let t = self.t.value();
        let carry: Vec<u64> = poly_t
            .iter()
            .map(|&c| (self.q_mod_t * c + t / 2) / t)
            .collect();
        let mut out = Vec::with_capacity(self.n * self.q.len());
        for (m, &d) in self.q.iter().zip(&self.delta_q) {
            let ds = m.shoup(d);
            out.extend(
                poly_t
                    .iter()
                    .zip(&carry)
                    .map(|(&c, &k)| m.add(m.mul_shoup(c, d, ds), k)),
            );
        }
        out
    }

    /// NTT-domain index permutation realising `X -> X^g`.
    pub(crate) fn galois_permutation(&self, g: u64) -> Vec<usize> {
        let two_n = 2 * self.n as u64;
        let log_n = self.n.trailing_zeros();
        (0..self.n)
            .map(|k| {
                let e = 2 * bit_reverse(k, log_n) as u64 + 1;
                let image = e * g % two_n;
                bit_reverse(((image - 1) / 2) as usize, log_n)
            })
            .collect()
    }

    pub(crate) fn apply_permutation(&self, poly: &[u64], perm: &[usize]) -> Vec<u64> {
        let mut out = Vec::with_capacity(poly.len());
        for limb in poly.chunks_exact(self.n) {
            out.extend(perm.iter().map(|&k| limb[k]));
        }
        out
    }

    /// Galois element that rotates the batching rows left by `steps`.
    pub(crate) fn galois_element(&self, steps: usize) -> u64 {
        let two_n = 2 * self.n as u64;
        let mut g = 1u64;
        for _ in 0..steps % (self.n / 2) {
            g = g * 3 % two_n;
        }
        g
    }

    /// Exact centered extension of coefficient-form polynomials from base
    /// `Q` to base `P`.
    pub(crate) fn extend_q_to_p(&self, src: &[u64]) -> Vec<u64> {
        let n = self.n;
        let l = self.q.len();
        let lp = self.p.len();
        let mut out = vec![0u64; n * lp];
        let mut tilde = vec![0u64; l];
        for c in 0..n {
            let mut frac = 0f64;
            for i in 0..l {
                let (w, ws) = self.q_hat_inv[i];
                let v = self.q[i].mul_shoup(src[i * n + c], w, ws);
                tilde[i] = v;
                frac += v as f64 * self.q_inv_f64[i];
            }
            let overflow = frac.round() as u64;
            for j in 0..lp {
                let mut acc = overflow as u128 * self.neg_q_mod_p[j] as u128;
                for i in 0..l {
                    acc += tilde[i] as u128 * self.q_hat_mod_p[i][j] as u128;
                }
                out[j * n + c] = self.p[j].reduce_u128(acc);
            }
        }
        out
    }

    /// Computes `round(t * y / Q)` in base `P` for a coefficient-form `y`
    /// given in base `Q` (`yq`) and base `P` (`yp`).
    pub(crate) fn scale_down_to_p(&self, yq: &[u64], yp: &[u64]) -> Vec<u64> {
        let n = self.n;
        let l = self.q.len();
        let lp = self.p.len();
        let mut out = vec![0u64; n * lp];
        let mut tilde = vec![0u64; l];
        for c in 0..n {
            let mut frac: u128 = 0;
            for i in 0..l {
                let (w, ws) = self.r_hat_inv_q[i];
                let v = self.q[i].mul_shoup(yq[i * n + c], w, ws);
                tilde[i] = v;
                frac += v as u128 * self.scale_frac[i] as u128;
            }
            let rounded = ((frac + (1u128 << 63)) >> 64) as u64;
            for j in 0..lp {
                let (w, ws) = self.scale_p[j];
                let pj = &self.p[j];
                let mut acc = rounded as u128 + pj.mul_shoup(yp[j * n + c], w, ws) as u128;
                for i in 0..l {
                    acc += tilde[i] as u128 * self.scale_int[i][j] as u128;
                }
                out[j * n + c] = pj.reduce_u128(acc);
            }
        }
        out
    }

    /// Exact centered conversion from base `P` back to base `Q`.
    pub(crate) fn convert_p_to_q(&self, src: &[u64]) -> Vec<u64> {
        let n = self.n;
        let l = self.q.len();
        let lp = self.p.len();
        let mut out = vec![0u64; n * l];
        let mut tilde = vec![0u64; lp];
        for c in 0..n {
            let mut frac = 0f64;
            for j in 0..lp {
                let (w, ws) = self.p_hat_inv[j];
                let v = self.p[j].mul_shoup(src[j * n + c], w, ws);
                tilde[j] = v;
                frac += v as f64 * self.p_inv_f64[j];
            }
            let overflow = frac.round() as u64;
            for i in 0..l {
                let mut acc = overflow as u128 * self.neg_p_mod_q[i] as u128;
                for j in 0..lp {
                    acc += tilde[j] as u128 * self.p_hat_mod_q[j][i] as u128;
                }
                out[i * n + c] = self.q[i].reduce_u128(acc);
            }
        }
        out
    }

    /// Exact value of a coefficient-form polynomial mod `Q`, one coefficient
    /// at a time (diagnostics only).
    pub(crate) fn reconstruct(&self, poly: &[u64], coeff: usize) -> BigUint {
        let mut acc = BigUint::zero();
        for (i, m) in self.q.iter().enumerate() {
            let (w, ws) = self.q_hat_inv[i];
            let v = m.mul_shoup(poly[i * self.n + coeff], w, ws);
            acc += &self.q_hat_big[i] * v;
        }
        acc % &self.q_big
    }

    pub(crate) fn q_bits(&self) -> u64 {
        self.q_big.bits()
    }

    pub(crate) fn ntt_p(&self, poly: &mut [u64]) {
        for (limb, table) in poly.chunks_exact_mut(self.n).zip(&self.p_ntt) {
            table.forward(limb);
        }
    }

    pub(crate) fn intt_p(&self, poly: &mut [u64]) {
        for (limb, table) in poly.chunks_exact_mut(self.n).zip(&self.p_ntt) {
            table.inverse(limb);
        }
    }

    pub(crate) fn mul_p(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut out = Vec::with_capacity(a.len());
        for ((la, lb), m) in a.chunks_exact(self.n).zip(b.chunks_exact(self.n)).zip(&self.p) {
            out.extend(la.iter().zip(lb).map(|(&x, &y)| m.mul(x, y)));
        }
        out
    }

    pub(crate) fn mul_add_p(&self, acc: &mut [u64], a: &[u64], b: &[u64]) {
        for (((lc, la), lb), m) in acc
            .chunks_exact_mut(self.n)
            .zip(a.chunks_exact(self.n))
            .zip(b.chunks_exact(self.n))
            .zip(&self.p)
        {
            for ((c, &x), &y) in lc.iter_mut().zip(la).zip(lb) {
                *c = m.add(*c, m.mul(x, y));
            }
        }
    }

}
