//! Boolean gates on ciphertexts whose slots are all 0 or 1.
//!
//! Binarity is a caller contract and is not checked. Constants enter as
//! plaintext operands, which keeps noise low without changing results.

use std::ops::Range;

use crate::he::{Backend, Evaluator, HeError, HomomorphicVector, SlotVector};

type Hv<B> = HomomorphicVector<<B as Backend>::Ciphertext>;

/// `1 - v`, evaluated as `w + u * v` with `u` all `T - 1` and `w` all ones.
pub fn gate_not<B: Backend>(ev: &Evaluator<B>, v: &Hv<B>) -> Result<Hv<B>, HeError> {
    let t = ev.plain_modulus();
    let u = SlotVector::constant(t - 1, t);
    let w = SlotVector::constant(1, t);
    ev.add_plain(&ev.mul_plain(v, &u)?, &w)
}

/// `1 - v` on `range` and 1 elsewhere, in a single plaintext multiply.
/// Slots of `v` outside `range` are ignored, so this also isolates a
/// region of a packed vector.
pub fn gate_not_within<B: Backend>(
    ev: &Evaluator<B>,
    v: &Hv<B>,
    range: Range<usize>,
) -> Result<Hv<B>, HeError> {
    let t = ev.plain_modulus();
    let u = SlotVector::mask(range).mul(&SlotVector::constant(t - 1, t), t);
    ev.add_plain(&ev.mul_plain(v, &u)?, &SlotVector::constant(1, t))
}

pub fn gate_and<B: Backend>(ev: &Evaluator<B>, a: &Hv<B>, b: &Hv<B>) -> Result<Hv<B>, HeError> {
    ev.mul(a, b)
}

/// `NOT(NOT a AND NOT b)`: depth plus three.
pub fn gate_or<B: Backend>(ev: &Evaluator<B>, a: &Hv<B>, b: &Hv<B>) -> Result<Hv<B>, HeError> {
    let both_clear = gate_and(ev, &gate_not(ev, a)?, &gate_not(ev, b)?)?;
    gate_not(ev, &both_clear)
}

/// `(a OR b) AND NOT(a AND b)`: depth plus four.
pub fn gate_xor<B: Backend>(ev: &Evaluator<B>, a: &Hv<B>, b: &Hv<B>) -> Result<Hv<B>, HeError> {
    let either = gate_or(ev, a, b)?;
    let not_both = gate_not(ev, &gate_and(ev, a, b)?)?;
    gate_and(ev, &either, &not_both)
}
