//! Negacyclic number-theoretic transform over `Z_q[X]/(X^n + 1)`.
//!
//! The forward transform leaves its output in bit-reversed order: slot `k`
//! holds the input polynomial evaluated at `psi^(2 * bitrev(k) + 1)`, where
//! `psi` is the table's primitive `2n`-th root of unity.

use super::zq::{primitive_root, Modulus};

#[derive(Debug, Clone)]
pub struct NttTable {
    q: Modulus,
    n: usize,
    log_n: u32,
    psi: u64,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

#[inline]
pub fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

impl NttTable {
    pub fn new(q: Modulus, n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2);
        let log_n = n.trailing_zeros();
        let psi = primitive_root(&q, 2 * n as u64);
        let psi_inv = q.inv(psi).expect("root is invertible");
        let mut psi_rev = vec![0; n];
        let mut psi_inv_rev = vec![0; n];
        let (mut pw, mut pw_inv) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_rev[r] = pw;
            psi_inv_rev[r] = pw_inv;
            pw = q.mul(pw, psi);
            pw_inv = q.mul(pw_inv, psi_inv);
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| q.shoup(w)).collect();
        let psi_inv_rev_shoup = psi_inv_rev.iter().map(|&w| q.shoup(w)).collect();
        let n_inv = q.inv(n as u64).expect("n is invertible");
        Self {
            q,
            n,
            log_n,
            psi,
            psi_rev,
            psi_rev_shoup,
            psi_inv_rev,
            psi_inv_rev_shoup,
            n_inv,
            n_inv_shoup: q.shoup(n_inv),
        }
    }

    pub fn modulus(&self) -> &Modulus {
        &self.q
    }

    pub fn log_n(&self) -> u32 {
        self.log_n
    }

    pub fn psi(&self) -> u64 {
        self.psi
    }

    /// Forward transform with lazy (Harvey) butterflies: intermediate
    /// values stay below `4q` and are fully reduced once at the end.
    pub fn forward(&self, a: &mut [u64]) {
        assert_eq!(a.len(), self.n);
        let q = self.q.value();
        let two_q = 2 * q;
        let mut t = self.n;
        let mut m = 1;
        while m < self.n {
            t >>= 1;
            for i in 0..m {
                let w = self.psi_rev[m + i];
                let ws = self.psi_rev_shoup[m + i];
                let start = 2 * i * t;
                let (lo, hi) = a[start..start + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let mut u = *x;
                    if u >= two_q {
                        u -= two_q;
                    }
                    let v = lazy_mul_shoup(*y, w, ws, q);
                    *x = u + v;
                    *y = u + two_q - v;
                }
            }
            m <<= 1;
        }
        for x in a.iter_mut() {
            let mut v = *x;
            if v >= two_q {
                v -= two_q;
            }
            if v >= q {
                v -= q;
            }
            *x = v;
        }
    }

    /// Inverse transform (Gentleman-Sande) with values kept below `2q`.
    pub fn inverse(&self, a: &mut [u64]) {
        assert_eq!(a.len(), self.n);
        let q = self.q.value();
        let two_q = 2 * q;
        let mut t = 1;
        let mut m = self.n;
        while m > 1 {
            let h = m >> 1;
            for i in 0..h {
                let w = self.psi_inv_rev[h + i];
                let ws = self.psi_inv_rev_shoup[h + i];
                let start = 2 * i * t;
                let (lo, hi) = a[start..start + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    let mut s = u + v;
                    if s >= two_q {
                        s -= two_q;
                    }
                    *x = s;
                    *y = lazy_mul_shoup(u + two_q - v, w, ws, q);
                }
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = self.q.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }
}

/// `x * w mod q` up to one extra `q`: the result lies in `[0, 2q)`.
#[inline(always)]
fn lazy_mul_shoup(x: u64, w: u64, w_shoup: u64, q: u64) -> u64 {
    let qhat = ((x as u128 * w_shoup as u128) >> 64) as u64;
    x.wrapping_mul(w).wrapping_sub(qhat.wrapping_mul(q))
}
