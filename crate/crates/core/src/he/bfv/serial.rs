//! Little-endian byte codecs for polynomials.

use super::context::BfvContext;
use crate::he::HeError;

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_poly(out: &mut Vec<u8>, poly: &[u64]) {
    out.reserve(poly.len() * 8);
    for v in poly {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, len: usize) -> Result<&'a [u8], HeError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| HeError::Decode("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32, HeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// Reads one polynomial over `Q`, rejecting out-of-range residues.
    pub(crate) fn poly(&mut self, ctx: &BfvContext) -> Result<Vec<u64>, HeError> {
        let raw = self.take(ctx.n * ctx.limbs() * 8)?;
        let mut out = Vec::with_capacity(ctx.n * ctx.limbs());
        for (limb, m) in raw.chunks_exact(ctx.n * 8).zip(&ctx.q) {
            for c in limb.chunks_exact(8) {
                let v = u64::from_le_bytes(c.try_into().unwrap());
                if v >= m.value() {
                    return Err(HeError::Decode("residue out of range".into()));
                }
                out.push(v);
            }
        }
        Ok(out)
    }

    pub(crate) fn finish(&self) -> Result<(), HeError> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(HeError::Decode(format!("{} trailing bytes", self.bytes.len() - self.pos)))
        }
    }
}

/// Shape prefix shared by every polynomial container.
pub(crate) fn put_shape(out: &mut Vec<u8>, ctx: &BfvContext) {
    put_u32(out, ctx.n as u32);
    put_u32(out, ctx.limbs() as u32);
}

pub(crate) fn check_shape(r: &mut Reader<'_>, ctx: &BfvContext) -> Result<(), HeError> {
    let n = r.u32()? as usize;
    let limbs = r.u32()? as usize;
    if n != ctx.n || limbs != ctx.limbs() {
        return Err(HeError::Decode(format!("shape {n}x{limbs} does not match parameters")));
    }
    Ok(())
}
