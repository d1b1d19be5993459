//! Word-sized modular arithmetic for NTT-friendly primes below 2^62.

/// A modulus `q < 2^62` with precomputed Barrett constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    // floor(2^128 / value), low word first.
    ratio: [u64; 2],
}

impl Modulus {
    pub fn new(value: u64) -> Self {
        assert!(value > 2 && value < (1 << 62), "modulus out of range: {value}");
        let r = u128::MAX / value as u128;
        Self {
            value,
            ratio: [r as u64, (r >> 64) as u64],
        }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bits(&self) -> u32 {
        64 - self.value.leading_zeros()
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    /// Reduces any 128-bit value.
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let xl = x as u64 as u128;
        let xh = x >> 64;
        let rl = self.ratio[0] as u128;
        let rh = self.ratio[1] as u128;
        let a = (xl * rl) >> 64;
        let b = xl * rh;
        let c = xh * rl;
        let d = xh * rh;
        let mid = a + (b as u64 as u128) + (c as u64 as u128);
        let qhat = d + (b >> 64) + (c >> 64) + (mid >> 64);
        let mut r = x.wrapping_sub(qhat.wrapping_mul(self.value as u128)) as u64;
        while r >= self.value {
            r -= self.value;
        }
        r
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if x >= self.value {
            x % self.value
        } else {
            x
        }
    }

    /// Reduces a signed integer into `[0, q)`.
    #[inline]
    pub fn reduce_i64(&self, x: i64) -> u64 {
        let r = self.reduce(x.unsigned_abs());
        if x < 0 {
            self.neg(r)
        } else {
            r
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// Shoup precomputation for a fixed multiplicand `w < q`.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// `x * w mod q` using the Shoup constant of `w`; `x` may be any word.
    #[inline]
    pub fn mul_shoup(&self, x: u64, w: u64, w_shoup: u64) -> u64 {
        let qhat = ((x as u128 * w_shoup as u128) >> 64) as u64;
        let r = x.wrapping_mul(w).wrapping_sub(qhat.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        base = self.reduce(base);
        let mut acc = 1u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse modulo a prime modulus.
    pub fn inv(&self, a: u64) -> Option<u64> {
        let a = self.reduce(a);
        if a == 0 {
            None
        } else {
            Some(self.pow(a, self.value - 2))
        }
    }

    /// Centered representative of `a` in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod_u64(r, b, m);
        }
        b = mul_mod_u64(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for the full `u64` range.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 325, 9375, 28178, 450775, 9780504, 1795265022] {
        let a = a % n;
        if a == 0 {
            continue;
        }
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Largest primes with exactly `bits` bits that are `1 mod step`, in
/// descending order, skipping anything in `exclude`.
pub fn ntt_primes(bits: u32, step: u64, count: usize, exclude: &[u64]) -> Vec<u64> {
    assert!((2..=62).contains(&bits));
    let upper = 1u64 << bits;
    let lower = 1u64 << (bits - 1);
    let mut out = Vec::with_capacity(count);
    let mut candidate = (upper - 1) / step * step + 1;
    while out.len() < count && candidate > lower {
        if candidate < upper && is_prime(candidate) && !exclude.contains(&candidate) {
            out.push(candidate);
        }
        candidate -= step;
    }
    assert_eq!(out.len(), count, "not enough {bits}-bit primes = 1 mod {step}");
    out
}

/// A primitive `order`-th root of unity modulo the prime `q`, where `order`
/// is a power of two dividing `q - 1`.
pub fn primitive_root(q: &Modulus, order: u64) -> u64 {
    assert_eq!((q.value() - 1) % order, 0);
    let cofactor = (q.value() - 1) / order;
    (2..q.value())
        .map(|g| q.pow(g, cofactor))
        .find(|&r| q.pow(r, order / 2) == q.value() - 1)
        .expect("prime modulus has a primitive root")
}
