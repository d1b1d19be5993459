//! Random records and queries with known answers, for tests and
//! benchmarks. Every generator takes the RNG explicitly, so a seed fixes
//! the corpus.

use chrono::{Datelike, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::encoding::{
    Demographics, Field, Fingercode, QuantizationConfig, RecordJson, UserId, UserRecord, FINGERCODE_LEN,
    RAW_FINGERCODE_MAX,
};
use crate::queries::PlainQuery;

/// The ordering relations the date comparison distinguishes, from the
/// stored `(y, d)` to the query `(y', d')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DobCase {
    /// `y > y'`: fails.
    LaterYear,
    /// `y = y'`, `d > d'`: fails.
    SameYearLaterDay,
    /// `y = y'`, `d <= d'`: passes.
    SameYearEarlierDay,
    /// `y < y'`: passes.
    EarlierYear,
    /// `(y, d) = (y', d')`: passes.
    Equal,
}

impl DobCase {
    pub const ALL: [DobCase; 5] = [
        Self::LaterYear,
        Self::SameYearLaterDay,
        Self::SameYearEarlierDay,
        Self::EarlierYear,
        Self::Equal,
    ];
}

const NAME_CHARS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz .'-";
const EMAIL_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789._";

fn pick<R: Rng + ?Sized>(rng: &mut R, alphabet: &[u8], len: usize) -> String {
    (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())] as char).collect()
}

pub fn random_user_id<R: Rng + ?Sized>(rng: &mut R) -> UserId {
    UserId(rng.random())
}

/// A valid value for `field`.
pub fn random_field_value<R: Rng + ?Sized>(rng: &mut R, field: Field) -> String {
    match field {
        Field::Name => {
            let len = rng.random_range(1..=field.max_chars());
            pick(rng, NAME_CHARS, len)
        }
        Field::Gender => ["M", "F", "X"][rng.random_range(0..3)].to_string(),
        Field::Pincode => pick(rng, b"0123456789", 6),
        Field::Phone => {
            let len = rng.random_range(7..=field.max_chars());
            let mut s = pick(rng, b"0123456789", len);
            if rng.random_bool(0.3) {
                s.replace_range(0..1, "+");
            }
            s
        }
        Field::Email => {
            let local = rng.random_range(1..=18);
            let host = rng.random_range(1..=field.max_chars() - local - 5);
            format!("{}@{}.org", pick(rng, EMAIL_CHARS, local), pick(rng, EMAIL_CHARS, host))
        }
    }
}

/// A birth date between 1900 and 2099.
pub fn random_dob<R: Rng + ?Sized>(rng: &mut R) -> NaiveDate {
    let year = rng.random_range(1900..2100);
    let days = if NaiveDate::from_ymd_opt(year, 12, 31).unwrap().ordinal() == 366 { 366 } else { 365 };
    NaiveDate::from_yo_opt(year, rng.random_range(1..=days)).unwrap()
}

pub fn random_fingercode<R: Rng + ?Sized>(rng: &mut R, cfg: &QuantizationConfig) -> Fingercode {
    let levels = (0..FINGERCODE_LEN).map(|_| rng.random_range(0..=cfg.max_level)).collect();
    Fingercode::from_levels(levels, cfg).expect("levels in range")
}

pub fn random_record<R: Rng + ?Sized>(rng: &mut R, cfg: &QuantizationConfig) -> UserRecord {
    UserRecord {
        user_id: random_user_id(rng),
        demographics: Demographics {
            name: random_field_value(rng, Field::Name),
            gender: random_field_value(rng, Field::Gender),
            pincode: random_field_value(rng, Field::Pincode),
            phone: random_field_value(rng, Field::Phone),
            email: random_field_value(rng, Field::Email),
            dob: random_dob(rng),
        },
        fingercode: random_fingercode(rng, cfg),
    }
}

/// The enrollment-file form of a record. Raw fingercode values are picked
/// so that quantizing them gives back the stored levels.
pub fn record_json(record: &UserRecord, cfg: &QuantizationConfig) -> RecordJson {
    let d = &record.demographics;
    RecordJson {
        user_id: record.user_id,
        name: d.name.clone(),
        gender: d.gender.clone(),
        pincode: d.pincode.clone(),
        phone: d.phone.clone(),
        email: d.email.clone(),
        dob: d.dob,
        fingercode: record
            .fingercode
            .levels()
            .iter()
            .map(|&l| l as f64 * RAW_FINGERCODE_MAX / cfg.max_level as f64)
            .collect(),
    }
}

/// A value that differs from `value` in exactly one bit of one character
/// and still passes the field's validation.
pub fn one_bit_near_miss<R: Rng + ?Sized>(rng: &mut R, field: Field, value: &str) -> String {
    let bytes = value.as_bytes();
    let mut candidates = Vec::new();
    for (i, &b) in bytes.iter().enumerate() {
        for bit in 0..7 {
            let mut v = bytes.to_vec();
            v[i] = b ^ (1 << bit);
            let s = String::from_utf8(v).expect("ascii");
            if field.validate(&s).is_ok() {
                candidates.push(s);
            }
        }
    }
    candidates.choose(rng).cloned().expect("every valid value has a one-bit neighbour")
}

/// A query for `field` against `value`: an exact match, a one-bit near
/// miss, a prefix, an extension, or an unrelated value, in that order of
/// `variant % 5`.
pub fn field_query<R: Rng + ?Sized>(rng: &mut R, field: Field, value: &str, variant: usize) -> String {
    let other = |rng: &mut R| loop {
        let v = random_field_value(rng, field);
        if v != value {
            return v;
        }
    };
    match variant % 5 {
        0 => value.to_string(),
        1 => one_bit_near_miss(rng, field, value),
        2 if value.len() > 1 && !matches!(field, Field::Pincode) => value[..value.len() - 1].to_string(),
        3 if value.len() < field.max_chars() && !matches!(field, Field::Pincode | Field::Gender) => {
            format!("{value}a")
        }
        _ => other(rng),
    }
}

/// A query date in the relation `case` to `dob`, or `None` if `dob` sits
/// at an edge where the case cannot occur inside the encodable range.
pub fn dob_query<R: Rng + ?Sized>(rng: &mut R, dob: NaiveDate, case: DobCase) -> Option<NaiveDate> {
    let (y, d) = (dob.year(), dob.ordinal());
    let days_in = |year: i32| NaiveDate::from_ymd_opt(year, 12, 31).unwrap().ordinal();
    let on = |year: i32, day: u32| NaiveDate::from_yo_opt(year, day.min(days_in(year)));
    match case {
        DobCase::LaterYear => {
            (y > 1900).then(|| ())?;
            let yq = rng.random_range(1900.max(y - 80)..y);
            on(yq, rng.random_range(1..=days_in(yq)))
        }
        DobCase::SameYearLaterDay => (d > 1).then(|| on(y, rng.random_range(1..d)))?,
        DobCase::SameYearEarlierDay => on(y, rng.random_range(d..=days_in(y))),
        DobCase::EarlierYear => {
            (y < 2299).then(|| ())?;
            let yq = rng.random_range(y + 1..=2299.min(y + 120));
            on(yq, rng.random_range(1..=days_in(yq)))
        }
        DobCase::Equal => Some(dob),
    }
}

/// A fingercode whose squared distance to `base` is exactly `target`.
/// Returns `None` only if `target` exceeds what the level range allows.
pub fn fingercode_at_distance<R: Rng + ?Sized>(
    rng: &mut R,
    base: &Fingercode,
    target: u64,
    cfg: &QuantizationConfig,
) -> Option<Fingercode> {
    let mut levels = base.levels().to_vec();
    let mut order: Vec<usize> = (0..FINGERCODE_LEN).collect();
    order.shuffle(rng);
    let mut remaining = target;
    for i in order {
        if remaining == 0 {
            break;
        }
        let l = levels[i];
        let room = l.max(cfg.max_level - l);
        let mut step = remaining.isqrt().min(room);
        // Leave a remainder that can still be written as a sum of squares
        // on the positions that are left; with hundreds of them this only
        // needs the greedy choice to be nonzero.
        if step == 0 {
            continue;
        }
        if rng.random_bool(0.5) && step > 1 && remaining - step * step < 4 {
            step -= 1;
        }
        remaining -= step * step;
        levels[i] = if l + step <= cfg.max_level { l + step } else { l - step };
    }
    if remaining != 0 {
        return None;
    }
    let out = Fingercode::from_levels(levels, cfg).ok()?;
    debug_assert_eq!(out.squared_distance(base), target);
    Some(out)
}

/// A random query of any kind against `record`, with its kind chosen by
/// `variant % 7`.
pub fn query_for<R: Rng + ?Sized>(
    rng: &mut R,
    record: &UserRecord,
    variant: usize,
    cfg: &QuantizationConfig,
) -> PlainQuery {
    let k = variant % 7;
    if k < 5 {
        let field = Field::ALL[k];
        let value = field_query(rng, field, record.demographics.field(field), variant / 7);
        return PlainQuery::Field(field, value);
    }
    if k == 5 {
        let case = DobCase::ALL[(variant / 7) % DobCase::ALL.len()];
        let date = dob_query(rng, record.demographics.dob, case).unwrap_or(record.demographics.dob);
        return PlainQuery::DobAfter(date);
    }
    let beta = cfg.beta;
    let targets = [0, beta - 2, beta - 1, beta, beta + 1, beta + 2];
    let target = targets[(variant / 7) % targets.len()];
    PlainQuery::Biometric(fingercode_at_distance(rng, &record.fingercode, target, cfg).expect("reachable distance"))
}
