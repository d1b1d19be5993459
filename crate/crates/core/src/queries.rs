//! Query circuits run by the third-party server, and the single check the
//! central server applies to every result.
//!
//! Every circuit leaves its verdict in the same shape: slots `0..400` are
//! all zero for a pass, and the witness window `400..=400 + beta` holds
//! at least one zero. The check therefore never needs to know which query
//! produced a ciphertext.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{
    self, DateEncoding, EncodingError, Field, Fingercode, UserRecord, DATE_WIDTH, DAY_RANGE,
    DEFAULT_BETA, FINGERCODE_LEN, YEAR_RANGE,
};
use crate::gates::{gate_and, gate_not, gate_not_within};
use crate::he::{
    Backend, Decryptor, Evaluator, HeError, HomomorphicVector, SecretBackend, SlotVector, SLOT_COUNT,
};

type Hv<B> = HomomorphicVector<<B as Backend>::Ciphertext>;

/// Length of the must-be-zero prefix; also where the witness window starts.
pub const PREFIX_LEN: usize = 400;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("{kind} takes {expected} ciphertexts, got {found}")]
    Arity { kind: QueryKind, expected: usize, found: usize },
    #[error("invalid query configuration: {0}")]
    Config(String),
    #[error("unknown query kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    NameMatch,
    GenderMatch,
    PincodeMatch,
    PhoneMatch,
    EmailMatch,
    DobAfter,
    BiometricMatch,
}

impl QueryKind {
    pub const ALL: [QueryKind; 7] = [
        Self::NameMatch,
        Self::GenderMatch,
        Self::PincodeMatch,
        Self::PhoneMatch,
        Self::EmailMatch,
        Self::DobAfter,
        Self::BiometricMatch,
    ];

    pub fn for_field(field: Field) -> Self {
        match field {
            Field::Name => Self::NameMatch,
            Field::Gender => Self::GenderMatch,
            Field::Pincode => Self::PincodeMatch,
            Field::Phone => Self::PhoneMatch,
            Field::Email => Self::EmailMatch,
        }
    }

    pub fn field(self) -> Option<Field> {
        match self {
            Self::NameMatch => Some(Field::Name),
            Self::GenderMatch => Some(Field::Gender),
            Self::PincodeMatch => Some(Field::Pincode),
            Self::PhoneMatch => Some(Field::Phone),
            Self::EmailMatch => Some(Field::Email),
            Self::DobAfter | Self::BiometricMatch => None,
        }
    }

    /// Number of ciphertexts the service provider sends.
    pub fn arity(self) -> usize {
        match self {
            Self::DobAfter => 2,
            _ => 1,
        }
    }

    /// Wire code, starting at 1.
    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get((code as usize).checked_sub(1)?).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NameMatch => "name",
            Self::GenderMatch => "gender",
            Self::PincodeMatch => "pincode",
            Self::PhoneMatch => "phone",
            Self::EmailMatch => "email",
            Self::DobAfter => "dob-after",
            Self::BiometricMatch => "biometric",
        }
    }

    /// Depth of `out` with the demographic output-mask multiply removed,
    /// the counting used by the published depth table.
    pub fn comparable_depth(self, raw: u32) -> u32 {
        if self.field().is_some() {
            raw.saturating_sub(1)
        } else {
            raw
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryKind {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| QueryError::UnknownKind(s.to_string()))
    }
}

/// Threshold and check windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryConfig {
    beta: u64,
}

impl QueryConfig {
    pub fn new(beta: u64) -> Result<Self, QueryError> {
        if beta == 0 || PREFIX_LEN as u64 + beta >= SLOT_COUNT as u64 {
            return Err(QueryError::Config(format!(
                "beta must lie in 1..{}, got {beta}",
                SLOT_COUNT - PREFIX_LEN
            )));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> u64 {
        self.beta
    }

    /// Slots that must all be zero for a pass.
    pub fn check_zero_prefix(&self) -> Range<usize> {
        0..PREFIX_LEN
    }

    /// Slots of which at least one must be zero for a pass (inclusive of
    /// `400 + beta`).
    pub fn check_zero_witness(&self) -> Range<usize> {
        PREFIX_LEN..PREFIX_LEN + self.beta as usize + 1
    }
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self { beta: DEFAULT_BETA }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Pass,
    Fail,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
        })
    }
}

/// Left-rotation steps the circuits use. Anything else is composed from
/// the powers of two.
pub fn rotation_steps() -> Vec<usize> {
    let mut steps: Vec<usize> = (0..12).map(|b| 1 << b).collect();
    steps.extend(Field::ALL.iter().map(|f| f.start()).filter(|&s| s > 0));
    steps.extend([YEAR_RANGE.start, DAY_RANGE.start, SLOT_COUNT - PREFIX_LEN]);
    steps.sort_unstable();
    steps.dedup();
    steps
}

/// Exact match of one text field.
///
/// Isolates the field, moves it to the origin and subtracts the query. The
/// final multiply by a `0..400` mask clears the witness window, so a match
/// leaves the whole output zero.
pub fn tps_demographic_match<B: Backend>(
    ev: &Evaluator<B>,
    demo: &Hv<B>,
    field: Field,
    query: &Hv<B>,
    _cfg: &QueryConfig,
) -> Result<Hv<B>, QueryError> {
    let isolated = ev.mul_plain(demo, &SlotVector::mask(field.range()))?;
    let aligned = ev.rotate_left(&isolated, field.start())?;
    let diff = ev.sub(&aligned, query)?;
    Ok(ev.mul_plain(&diff, &SlotVector::mask(0..PREFIX_LEN))?)
}

/// `<ED, 0, ..., 0>` where `ED` is the squared Euclidean distance of two
/// fingercodes. Slot 0 collects the sum after ten rotate-and-add doublings.
pub fn tps_euclidean_distance<B: Backend>(
    ev: &Evaluator<B>,
    query: &Hv<B>,
    stored: &Hv<B>,
) -> Result<Hv<B>, QueryError> {
    let diff = ev.sub(query, stored)?;
    let mut acc = ev.mul(&diff, &diff)?;
    let mut span = 1;
    while span < FINGERCODE_LEN {
        acc = ev.add(&acc, &ev.rotate_left(&acc, span)?)?;
        span *= 2;
    }
    Ok(ev.mul_plain(&acc, &SlotVector::mask(0..1))?)
}

/// Turns `<ED, 0, ...>` into the witness form: slot `400 + i` holds
/// `ED + i - beta` for `i` in `0..=beta`, so a zero appears exactly when
/// `ED <= beta`, at slot `400 + beta - ED`.
pub fn tps_threshold_compare<B: Backend>(
    ev: &Evaluator<B>,
    distance: &Hv<B>,
    cfg: &QueryConfig,
) -> Result<Hv<B>, QueryError> {
    let t = ev.plain_modulus();
    let beta = cfg.beta() as usize;
    // Twelve doublings copy ED into all 4096 slots; the mask trims the copy
    // to the ramp window.
    let mut spread = distance.clone();
    let mut span = 1;
    while span < SLOT_COUNT {
        spread = ev.add(&spread, &ev.rotate_left(&spread, span)?)?;
        span *= 2;
    }
    let window = SlotVector::mask(0..beta + 1);
    let copies = ev.mul_plain(&spread, &window)?;

    let ramp: Vec<u64> = (0..=beta as u64).collect();
    let ramp = SlotVector::from_prefix(&ramp, t)?;
    let threshold = window.mul(&SlotVector::constant(cfg.beta(), t), t);
    let shifted = ev.sub_plain(&ev.add_plain(&copies, &ramp)?, &threshold)?;
    Ok(ev.rotate_right(&shifted, PREFIX_LEN)?)
}

/// Full biometric query: distance, then threshold.
pub fn tps_biometric_match<B: Backend>(
    ev: &Evaluator<B>,
    query: &Hv<B>,
    stored: &Hv<B>,
    cfg: &QueryConfig,
) -> Result<Hv<B>, QueryError> {
    let distance = tps_euclidean_distance(ev, query, stored)?;
    tps_threshold_compare(ev, &distance, cfg)
}

/// Passes when the query date `(y', d')` is on or after the stored date
/// of birth `(y, d)`.
///
/// With `xor = y XOR y'` on the unary year regions:
/// * `temp1 = y AND xor` is nonzero exactly when `y > y'`;
/// * `temp2 = (d' - (d + i)) * NOT(xor AND y')` is zero on the slots where
///   `y < y'`, and at slot `d' - d` when the years agree and `d <= d'`.
///
/// The output is `temp1 + rotate_right(temp2, 400)` plus ones on
/// `800..=400 + beta`, so the unified check reads the verdict directly.
/// Depth 7.
pub fn tps_dob_compare<B: Backend>(
    ev: &Evaluator<B>,
    demo: &Hv<B>,
    year_query: &Hv<B>,
    day_query: &Hv<B>,
    cfg: &QueryConfig,
) -> Result<Hv<B>, QueryError> {
    dob_circuit(ev, demo, year_query, day_query, 0, cfg)
}

/// Like [`tps_dob_compare`], but first adds `years` to the stored year,
/// so the query passes when `(y + years, d) <= (y', d')`.
pub fn tps_dob_compare_with_offset<B: Backend>(
    ev: &Evaluator<B>,
    demo: &Hv<B>,
    year_query: &Hv<B>,
    day_query: &Hv<B>,
    years: usize,
    cfg: &QueryConfig,
) -> Result<Hv<B>, QueryError> {
    if years >= DATE_WIDTH {
        return Err(QueryError::Config(format!("year offset {years} too large")));
    }
    dob_circuit(ev, demo, year_query, day_query, years, cfg)
}

/// Adds `years` to a unary year held in slots `0..400`: the ones move up
/// by `years` and the vacated head is refilled with ones. The stored year
/// plus `years` must stay below 400.
pub fn shift_years<B: Backend>(ev: &Evaluator<B>, unary: &Hv<B>, years: usize) -> Result<Hv<B>, QueryError> {
    let moved = ev.rotate_right(unary, years)?;
    Ok(ev.add_plain(&moved, &SlotVector::mask(0..years))?)
}

fn dob_circuit<B: Backend>(
    ev: &Evaluator<B>,
    demo: &Hv<B>,
    yq: &Hv<B>,
    dq: &Hv<B>,
    years: usize,
    cfg: &QueryConfig,
) -> Result<Hv<B>, QueryError> {
    let t = ev.plain_modulus();
    let year_start = YEAR_RANGE.start;

    // y and NOT y at the origin. The stored year is isolated inside the
    // first NOT, which saves a level; y itself can stay unmasked because
    // every use of it is multiplied by something supported on 0..400.
    let (y, not_y) = if years == 0 {
        let raw = ev.rotate_left(demo, year_start)?;
        let not_y = ev.rotate_left(&gate_not_within(ev, demo, YEAR_RANGE)?, year_start)?;
        (raw, not_y)
    } else {
        let isolated = ev.rotate_left(&ev.mul_plain(demo, &SlotVector::mask(YEAR_RANGE))?, year_start)?;
        let y = shift_years(ev, &isolated, years)?;
        // 1 - (y + years) on 0..400: negate the shifted ones, then add ones
        // everywhere except the refilled head.
        let neg = SlotVector::mask(YEAR_RANGE).mul(&SlotVector::constant(t - 1, t), t);
        let moved = ev.rotate_right(&ev.rotate_left(&ev.mul_plain(demo, &neg)?, year_start)?, years)?;
        let fill = SlotVector::constant(1, t).sub(&SlotVector::mask(0..years), t);
        (y, ev.add_plain(&moved, &fill)?)
    };

    let not_yq = gate_not(ev, yq)?;
    let either = gate_not(ev, &gate_and(ev, &not_y, &not_yq)?)?;
    let y_and_yq = gate_and(ev, &y, yq)?;
    let xor = gate_and(ev, &either, &gate_not(ev, &y_and_yq)?)?;
    let temp1 = gate_and(ev, &y, &xor)?;

    let day = ev.rotate_left(&ev.mul_plain(demo, &SlotVector::mask(DAY_RANGE))?, DAY_RANGE.start)?;
    let gap = ev.sub(dq, &day)?;
    let later_year = gate_and(ev, &xor, yq)?;
    let temp2 = ev.mul(&gap, &gate_not(ev, &later_year)?)?;

    let out = ev.add(&temp1, &ev.rotate_right(&temp2, PREFIX_LEN)?)?;
    let witness_end = cfg.check_zero_witness().end;
    let filler = SlotVector::mask(2 * PREFIX_LEN..witness_end.max(2 * PREFIX_LEN));
    Ok(ev.add_plain(&out, &filler)?)
}

/// Stored ciphertexts of one user.
pub struct StoredPair<'a, C> {
    pub demo: &'a HomomorphicVector<C>,
    pub bio: &'a HomomorphicVector<C>,
}

/// Runs the circuit for `kind` on a user's stored vectors.
pub fn evaluate<B: Backend>(
    ev: &Evaluator<B>,
    kind: QueryKind,
    stored: StoredPair<'_, B::Ciphertext>,
    payloads: &[Hv<B>],
    cfg: &QueryConfig,
) -> Result<Hv<B>, QueryError> {
    if payloads.len() != kind.arity() {
        return Err(QueryError::Arity {
            kind,
            expected: kind.arity(),
            found: payloads.len(),
        });
    }
    match kind {
        QueryKind::DobAfter => tps_dob_compare(ev, stored.demo, &payloads[0], &payloads[1], cfg),
        QueryKind::BiometricMatch => tps_biometric_match(ev, &payloads[0], stored.bio, cfg),
        _ => {
            let field = kind.field().expect("demographic kind");
            tps_demographic_match(ev, stored.demo, field, &payloads[0], cfg)
        }
    }
}

/// The query-agnostic predicate on a decrypted output.
pub fn extended_check(out: &SlotVector, cfg: &QueryConfig) -> Status {
    let slots = out.as_slice();
    let prefix_clear = slots[cfg.check_zero_prefix()].iter().all(|&v| v == 0);
    let witness = slots[cfg.check_zero_witness()].iter().any(|&v| v == 0);
    if prefix_clear && witness {
        Status::Pass
    } else {
        Status::Fail
    }
}

/// Decrypts a query output and applies [`extended_check`].
pub fn cs_extended_decrypt<S: SecretBackend>(
    dec: &Decryptor<S>,
    out: &HomomorphicVector<S::Ciphertext>,
    cfg: &QueryConfig,
) -> Result<Status, HeError> {
    Ok(extended_check(&dec.decrypt(out)?, cfg))
}

/// A query in the clear, as the service provider states it.
#[derive(Debug, Clone, PartialEq)]
pub enum PlainQuery {
    Field(Field, String),
    DobAfter(NaiveDate),
    /// Date query against the stored birth date moved forward by some
    /// years, compared on (year, day-of-year) pairs.
    DobAfterOffset(NaiveDate, u32),
    Biometric(Fingercode),
}

impl PlainQuery {
    pub fn kind(&self) -> QueryKind {
        match self {
            Self::Field(f, _) => QueryKind::for_field(*f),
            Self::DobAfter(_) | Self::DobAfterOffset(..) => QueryKind::DobAfter,
            Self::Biometric(_) => QueryKind::BiometricMatch,
        }
    }

    /// The slot vectors the service provider encrypts.
    pub fn encode(&self) -> Result<Vec<SlotVector>, EncodingError> {
        Ok(match self {
            Self::Field(f, v) => vec![encoding::encode_field_query(*f, v)?],
            Self::DobAfter(date) => {
                let (y, d) = encoding::encode_dob_query(*date)?;
                vec![y, d]
            }
            Self::DobAfterOffset(date, years) => {
                let (y, d) = encoding::encode_dob_query_with_offset(*date, *years)?;
                vec![y, d]
            }
            Self::Biometric(fc) => vec![fc.to_slots()],
        })
    }
}

/// Verdict computed directly from the record, with no slot vectors.
pub fn plaintext_oracle(query: &PlainQuery, record: &UserRecord, cfg: &QueryConfig) -> Status {
    let pass = match query {
        PlainQuery::Field(f, v) => record.demographics.field(*f) == v,
        PlainQuery::DobAfter(date) => *date >= record.demographics.dob,
        PlainQuery::DobAfterOffset(date, years) => {
            match (DateEncoding::from_date(record.demographics.dob), DateEncoding::from_date(*date)) {
                (Ok(born), Ok(q)) => (born.year_offset + years, born.day) <= (q.year_offset, q.day),
                _ => false,
            }
        }
        PlainQuery::Biometric(fc) => fc.squared_distance(&record.fingercode) <= cfg.beta(),
    };
    if pass {
        Status::Pass
    } else {
        Status::Fail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_codes_roundtrip() {
        for k in QueryKind::ALL {
            assert_eq!(QueryKind::from_code(k.code()), Some(k));
            assert_eq!(k.as_str().parse::<QueryKind>().unwrap(), k);
        }
        assert_eq!(QueryKind::from_code(0), None);
        assert_eq!(QueryKind::from_code(8), None);
    }

    #[test]
    fn config_bounds() {
        assert!(QueryConfig::new(0).is_err());
        assert!(QueryConfig::new(3696).is_err());
        let cfg = QueryConfig::new(3695).unwrap();
        assert_eq!(cfg.check_zero_witness(), 400..4096);
        assert_eq!(QueryConfig::default().check_zero_witness(), 400..3401);
    }

    #[test]
    fn check_predicate() {
        let cfg = QueryConfig::default();
        let t = crate::he::PLAIN_MODULUS;
        assert_eq!(extended_check(&SlotVector::zeros(), &cfg), Status::Pass);
        let mut v = vec![1u64; SLOT_COUNT];
        v[..400].iter_mut().for_each(|x| *x = 0);
        let no_witness = SlotVector::from_values(v.clone(), t).unwrap();
        assert_eq!(extended_check(&no_witness, &cfg), Status::Fail);
        v[3400] = 0;
        assert_eq!(extended_check(&SlotVector::from_values(v.clone(), t).unwrap(), &cfg), Status::Pass);
        v[0] = 1;
        assert_eq!(extended_check(&SlotVector::from_values(v, t).unwrap(), &cfg), Status::Fail);
    }

    #[test]
    fn step_set() {
        let steps = rotation_steps();
        for s in [1, 2, 1024, 2048, 400, 408, 456, 560, 800, 1200, 3696] {
            assert!(steps.contains(&s), "{s}");
        }
        assert_eq!(steps.len(), 19);
    }
}
