//! Key generation that checks the requested security level can actually
//! run the deepest query before committing to it.
//!
//! The date comparison is depth 7. If it does not decrypt correctly, with
//! some noise budget to spare, at the requested level, key generation
//! falls back to the 128-bit parameters and records why.

use chrono::NaiveDate;
use rand::{CryptoRng, Rng};

use crate::encoding::{encode_demographic, encode_dob_query, Demographics};
use crate::he::bfv::{BfvBackend, BfvDecryptor, KeyMaterial};
use crate::he::{Decryptor, Evaluator, HeError, HeParams, NoiseBudget, SecurityLevel};
use crate::protocol::KeyInfo;
use crate::queries::{extended_check, rotation_steps, tps_dob_compare, QueryConfig, QueryError, Status};

/// Smallest noise budget, in bits, a probe result must keep.
pub const MIN_MARGIN_BITS: u32 = 4;

pub struct KeySetup {
    pub keys: KeyMaterial,
    pub info: KeyInfo,
    /// Smallest noise budget left by the probe circuits.
    pub margin_bits: u32,
}

/// Outcome of running the date comparison at one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    Ok { margin_bits: u32 },
    Exhausted,
    WrongVerdict,
}

/// Runs one passing and one failing date comparison and reports the
/// smaller remaining budget.
pub fn probe_dob(keys: &KeyMaterial, cfg: &QueryConfig) -> Result<Probe, QueryError> {
    let ev: Evaluator<BfvBackend> = Evaluator::new(keys.backend());
    let dec: Decryptor<BfvDecryptor> = Decryptor::new(keys.decryptor());
    let date = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid date");
    let person = Demographics {
        name: "probe".into(),
        gender: "F".into(),
        pincode: "000000".into(),
        phone: "0".into(),
        email: "p@example.org".into(),
        dob: date(1987, 6, 15),
    };
    let demo = ev.encrypt(&encode_demographic(&person)?)?;
    let mut margin = u32::MAX;
    for (query, expected) in [(date(2001, 6, 15), Status::Pass), (date(1987, 6, 14), Status::Fail)] {
        let (y, d) = encode_dob_query(query)?;
        let out = tps_dob_compare(&ev, &demo, &ev.encrypt(&y)?, &ev.encrypt(&d)?, cfg)?;
        let slots = match dec.decrypt(&out) {
            Ok(s) => s,
            Err(HeError::NoiseBudgetExhausted) => return Ok(Probe::Exhausted),
            Err(e) => return Err(e.into()),
        };
        if extended_check(&slots, cfg) != expected {
            return Ok(Probe::WrongVerdict);
        }
        if let NoiseBudget::Bits(b) = dec.noise_budget(&out)? {
            margin = margin.min(b);
        }
    }
    if margin < MIN_MARGIN_BITS {
        return Ok(Probe::Exhausted);
    }
    Ok(Probe::Ok { margin_bits: margin })
}

/// Generates keys at `requested`, or at 128 bits if the probe fails there.
pub fn generate_feasible<R: Rng + CryptoRng>(
    requested: SecurityLevel,
    cfg: &QueryConfig,
    rng: &mut R,
) -> Result<KeySetup, QueryError> {
    let steps = rotation_steps();
    let mut fallback_reason = None;
    let mut levels = vec![requested];
    if requested != SecurityLevel::Bits128 {
        levels.push(SecurityLevel::Bits128);
    }
    for level in levels {
        let keys = KeyMaterial::generate(&HeParams::select(level), &steps, rng)?;
        match probe_dob(&keys, cfg)? {
            Probe::Ok { margin_bits } => {
                if let Some(reason) = &fallback_reason {
                    log::warn!("{reason}; using {level}");
                }
                return Ok(KeySetup {
                    keys,
                    info: KeyInfo {
                        requested,
                        security: level,
                        fallback_reason,
                        rotation_steps: steps,
                    },
                    margin_bits,
                });
            }
            failure => {
                fallback_reason = Some(format!(
                    "{level} parameters cannot evaluate the depth-7 date comparison ({})",
                    match failure {
                        Probe::Exhausted => "noise budget exhausted",
                        _ => "wrong verdict",
                    }
                ));
            }
        }
    }
    Err(QueryError::Config(fallback_reason.unwrap_or_default()))
}
