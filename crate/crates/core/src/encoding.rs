//! Plaintext layout of user records.
//!
//! The demographic vector holds one bit per slot for the text fields, a
//! unary year and a day ramp:
//!
//! | slots        | content                                  |
//! |--------------|------------------------------------------|
//! | `0..400`     | name, up to 50 ASCII characters          |
//! | `400..408`   | gender, one character                    |
//! | `408..456`   | pincode, six digits                      |
//! | `456..560`   | phone, up to 13 characters               |
//! | `560..800`   | email, up to 30 characters               |
//! | `800..1200`  | `y` ones followed by zeros               |
//! | `1200..1600` | `d, d + 1, ..., d + 399`                 |
//!
//! where `y` is the year minus 1900 and `d` the ordinal day (January 1 is
//! day 1). The biometric vector holds the quantized fingercode in slots
//! `0..640`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::he::{SlotVector, PLAIN_MODULUS, SLOT_COUNT};

pub const YEAR_RANGE: Range<usize> = 800..1200;
pub const DAY_RANGE: Range<usize> = 1200..1600;
/// Width of the year and day regions, and of the check prefix.
pub const DATE_WIDTH: usize = 400;
pub const FINGERCODE_LEN: usize = 640;
pub const PIVOT_YEAR: i32 = 1900;
/// Default fingerprint match threshold on the squared distance.
pub const DEFAULT_BETA: u64 = 3000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodingError {
    #[error("{field} holds {len} characters, at most {max} allowed")]
    FieldTooLong { field: Field, len: usize, max: usize },
    #[error("{field} contains a character outside printable ASCII")]
    NonAscii { field: Field },
    #[error("pincode must be exactly six digits")]
    InvalidPincode,
    #[error("gender must be a single character")]
    InvalidGender,
    #[error("date {0} outside 1900-01-01..=2299-12-31")]
    DateOutOfRange(NaiveDate),
    #[error("fingercode has {0} elements, expected 640")]
    FingercodeLength(usize),
    #[error("fingercode element {index} = {value} outside the accepted range")]
    FingercodeValue { index: usize, value: f64 },
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("malformed vector: {0}")]
    Malformed(String),
    #[error("bad user id: {0}")]
    UserId(String),
    #[error("bad record: {0}")]
    Record(String),
}

/// A text field of the demographic vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Name,
    Gender,
    Pincode,
    Phone,
    Email,
}

impl Field {
    pub const ALL: [Field; 5] = [Self::Name, Self::Gender, Self::Pincode, Self::Phone, Self::Email];

    /// Slot range of the field in the demographic vector.
    pub fn range(self) -> Range<usize> {
        match self {
            Self::Name => 0..400,
            Self::Gender => 400..408,
            Self::Pincode => 408..456,
            Self::Phone => 456..560,
            Self::Email => 560..800,
        }
    }

    pub fn start(self) -> usize {
        self.range().start
    }

    pub fn width(self) -> usize {
        self.range().len()
    }

    pub fn max_chars(self) -> usize {
        self.width() / 8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Name => "name",
            Self::Gender => "gender",
            Self::Pincode => "pincode",
            Self::Phone => "phone",
            Self::Email => "email",
        }
    }

    /// Checks a value against the field's character rules.
    pub fn validate(self, value: &str) -> Result<(), EncodingError> {
        if !value.bytes().all(|b| (0x20..0x7f).contains(&b)) {
            return Err(EncodingError::NonAscii { field: self });
        }
        match self {
            Self::Pincode if value.len() != 6 || !value.bytes().all(|b| b.is_ascii_digit()) => {
                return Err(EncodingError::InvalidPincode)
            }
            Self::Gender if value.len() != 1 => return Err(EncodingError::InvalidGender),
            _ => {}
        }
        if value.len() > self.max_chars() {
            return Err(EncodingError::FieldTooLong {
                field: self,
                len: value.len(),
                max: self.max_chars(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Field {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| EncodingError::UnknownField(s.to_string()))
    }
}

/// Opaque 16-byte user identifier, written as 32 hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserId(pub [u8; 16]);

impl FromStr for UserId {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|e| EncodingError::UserId(e.to_string()))?;
        let arr: [u8; 16] = bytes
            .try_into()
            .map_err(|_| EncodingError::UserId(format!("{s:?} is not 16 bytes")))?;
        Ok(Self(arr))
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for UserId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for UserId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A date as (years since 1900, ordinal day with January 1 = 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DateEncoding {
    pub year_offset: u32,
    pub day: u32,
}

impl DateEncoding {
    pub fn from_date(date: NaiveDate) -> Result<Self, EncodingError> {
        let offset = date.year() - PIVOT_YEAR;
        if !(0..DATE_WIDTH as i32).contains(&offset) {
            return Err(EncodingError::DateOutOfRange(date));
        }
        Ok(Self {
            year_offset: offset as u32,
            day: date.ordinal(),
        })
    }

    pub fn to_date(self) -> Option<NaiveDate> {
        NaiveDate::from_yo_opt(PIVOT_YEAR + self.year_offset as i32, self.day)
    }
}

/// Fingercode value range: raw elements in `[0, 255]` map affinely onto
/// `[0, max_level]`, where `640 * max_level^2 + beta < T` rules out any
/// wrap-around in the encrypted distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizationConfig {
    pub max_level: u64,
    pub beta: u64,
}

pub const RAW_FINGERCODE_MAX: f64 = 255.0;

impl QuantizationConfig {
    pub fn new(t: u64, beta: u64) -> Self {
        let bound = (t - beta - 1) / FINGERCODE_LEN as u64;
        let mut q = (bound as f64).sqrt() as u64;
        while q * q > bound {
            q -= 1;
        }
        while (q + 1) * (q + 1) <= bound {
            q += 1;
        }
        Self { max_level: q, beta }
    }

    pub fn quantize(&self, index: usize, raw: f64) -> Result<u64, EncodingError> {
        if !(0.0..=RAW_FINGERCODE_MAX).contains(&raw) {
            return Err(EncodingError::FingercodeValue { index, value: raw });
        }
        Ok((raw * self.max_level as f64 / RAW_FINGERCODE_MAX + 0.5).floor() as u64)
    }
}

impl Default for QuantizationConfig {
    fn default() -> Self {
        Self::new(PLAIN_MODULUS, DEFAULT_BETA)
    }
}

/// A quantized fingercode: 640 levels, each at most the configured maximum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingercode(Vec<u64>);

impl Fingercode {
    pub fn quantize(raw: &[f64], cfg: &QuantizationConfig) -> Result<Self, EncodingError> {
        if raw.len() != FINGERCODE_LEN {
            return Err(EncodingError::FingercodeLength(raw.len()));
        }
        raw.iter()
            .enumerate()
            .map(|(i, &x)| cfg.quantize(i, x))
            .collect::<Result<_, _>>()
            .map(Self)
    }

    /// Wraps already-quantized levels.
    pub fn from_levels(levels: Vec<u64>, cfg: &QuantizationConfig) -> Result<Self, EncodingError> {
        if levels.len() != FINGERCODE_LEN {
            return Err(EncodingError::FingercodeLength(levels.len()));
        }
        if let Some((index, &v)) = levels.iter().enumerate().find(|(_, &v)| v > cfg.max_level) {
            return Err(EncodingError::FingercodeValue { index, value: v as f64 });
        }
        Ok(Self(levels))
    }

    pub fn levels(&self) -> &[u64] {
        &self.0
    }

    /// Squared Euclidean distance, computed directly.
    pub fn squared_distance(&self, other: &Self) -> u64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| a.abs_diff(b).pow(2))
            .sum()
    }

    pub fn to_slots(&self) -> SlotVector {
        SlotVector::from_prefix(&self.0, PLAIN_MODULUS).expect("levels are below T")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demographics {
    pub name: String,
    pub gender: String,
    pub pincode: String,
    pub phone: String,
    pub email: String,
    pub dob: NaiveDate,
}

impl Demographics {
    pub fn field(&self, field: Field) -> &str {
        match field {
            Field::Name => &self.name,
            Field::Gender => &self.gender,
            Field::Pincode => &self.pincode,
            Field::Phone => &self.phone,
            Field::Email => &self.email,
        }
    }

    pub fn validate(&self) -> Result<(), EncodingError> {
        for f in Field::ALL {
            f.validate(self.field(f))?;
        }
        DateEncoding::from_date(self.dob)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRecord {
    pub user_id: UserId,
    pub demographics: Demographics,
    pub fingercode: Fingercode,
}

/// One line of an enrollment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordJson {
    pub user_id: UserId,
    pub name: String,
    pub gender: String,
    pub pincode: String,
    pub phone: String,
    pub email: String,
    pub dob: NaiveDate,
    pub fingercode: Vec<f64>,
}

impl RecordJson {
    pub fn into_record(self, cfg: &QuantizationConfig) -> Result<UserRecord, EncodingError> {
        let demographics = Demographics {
            name: self.name,
            gender: self.gender,
            pincode: self.pincode,
            phone: self.phone,
            email: self.email,
            dob: self.dob,
        };
        demographics.validate()?;
        Ok(UserRecord {
            user_id: self.user_id,
            demographics,
            fingercode: Fingercode::quantize(&self.fingercode, cfg)?,
        })
    }
}

/// Parses one JSON enrollment line into a validated record.
pub fn parse_record_line(line: &str, cfg: &QuantizationConfig) -> Result<UserRecord, EncodingError> {
    let json: RecordJson = serde_json::from_str(line).map_err(|e| EncodingError::Record(e.to_string()))?;
    json.into_record(cfg)
}

fn write_bits(out: &mut [u64], text: &str) {
    for (i, byte) in text.bytes().enumerate() {
        for bit in 0..8 {
            out[8 * i + bit] = u64::from(byte >> (7 - bit) & 1);
        }
    }
}

fn read_bits(bits: &[u64]) -> Result<String, EncodingError> {
    let mut out = String::new();
    let mut ended = false;
    for chunk in bits.chunks_exact(8) {
        let mut byte = 0u8;
        for &b in chunk {
            if b > 1 {
                return Err(EncodingError::Malformed(format!("non-binary slot value {b}")));
            }
            byte = byte << 1 | b as u8;
        }
        match byte {
            0 => ended = true,
            _ if ended => return Err(EncodingError::Malformed("text after padding".into())),
            0x20..=0x7e => out.push(byte as char),
            _ => return Err(EncodingError::Malformed(format!("byte {byte:#04x} is not printable"))),
        }
    }
    Ok(out)
}

fn year_slots(out: &mut [u64], year_offset: u32) {
    out[..year_offset as usize].iter_mut().for_each(|s| *s = 1);
}

/// Encodes a field value at the origin, the form a service provider sends.
pub fn encode_field_query(field: Field, value: &str) -> Result<SlotVector, EncodingError> {
    field.validate(value)?;
    let mut slots = vec![0u64; SLOT_COUNT];
    write_bits(&mut slots[..field.width()], value);
    Ok(SlotVector::from_prefix(&slots, PLAIN_MODULUS).expect("bits are below T"))
}

/// The demographic vector of a record.
pub fn encode_demographic(d: &Demographics) -> Result<SlotVector, EncodingError> {
    d.validate()?;
    let date = DateEncoding::from_date(d.dob)?;
    let mut slots = vec![0u64; SLOT_COUNT];
    for f in Field::ALL {
        write_bits(&mut slots[f.range()], d.field(f));
    }
    year_slots(&mut slots[YEAR_RANGE], date.year_offset);
    for (i, s) in slots[DAY_RANGE].iter_mut().enumerate() {
        *s = date.day as u64 + i as u64;
    }
    Ok(SlotVector::from_values(slots, PLAIN_MODULUS).expect("values are below T"))
}

/// The two query vectors for a date comparison: `y'` in unary and the
/// constant `d'`, both on slots `0..400`.
pub fn encode_dob_query(date: NaiveDate) -> Result<(SlotVector, SlotVector), EncodingError> {
    Ok(dob_query_slots(DateEncoding::from_date(date)?))
}

/// Query vectors for "at least `years` years after the birth date",
/// taken on (year, day-of-year) pairs: the query year is lowered by
/// `years` and the day kept.
pub fn encode_dob_query_with_offset(
    date: NaiveDate,
    years: u32,
) -> Result<(SlotVector, SlotVector), EncodingError> {
    let enc = DateEncoding::from_date(date)?;
    let year_offset = enc
        .year_offset
        .checked_sub(years)
        .ok_or(EncodingError::DateOutOfRange(date))?;
    Ok(dob_query_slots(DateEncoding { year_offset, day: enc.day }))
}

fn dob_query_slots(enc: DateEncoding) -> (SlotVector, SlotVector) {
    let mut year = vec![0u64; DATE_WIDTH];
    year_slots(&mut year, enc.year_offset);
    let day = vec![enc.day as u64; DATE_WIDTH];
    (
        SlotVector::from_prefix(&year, PLAIN_MODULUS).unwrap(),
        SlotVector::from_prefix(&day, PLAIN_MODULUS).unwrap(),
    )
}

/// Quantizes a raw fingercode into the biometric vector.
pub fn encode_fingercode(raw: &[f64], cfg: &QuantizationConfig) -> Result<SlotVector, EncodingError> {
    Ok(Fingercode::quantize(raw, cfg)?.to_slots())
}

/// Inverse of [`encode_demographic`].
pub fn decode_demographic(s: &SlotVector) -> Result<Demographics, EncodingError> {
    let slots = s.as_slice();
    let text = |f: Field| read_bits(&slots[f.range()]);

    let year = &slots[YEAR_RANGE];
    let ones = year.iter().take_while(|&&v| v == 1).count();
    if year[ones..].iter().any(|&v| v != 0) {
        return Err(EncodingError::Malformed("year region is not unary".into()));
    }
    let day = &slots[DAY_RANGE];
    let d = day[0];
    if d == 0 || day.iter().enumerate().any(|(i, &v)| v != d + i as u64) {
        return Err(EncodingError::Malformed("day region is not a ramp".into()));
    }
    let dob = DateEncoding {
        year_offset: ones as u32,
        day: d as u32,
    }
    .to_date()
    .ok_or_else(|| EncodingError::Malformed(format!("day {d} of year offset {ones}")))?;
    if slots[DAY_RANGE.end..].iter().any(|&v| v != 0) {
        return Err(EncodingError::Malformed("data past the day region".into()));
    }
    Ok(Demographics {
        name: text(Field::Name)?,
        gender: text(Field::Gender)?,
        pincode: text(Field::Pincode)?,
        phone: text(Field::Phone)?,
        email: text(Field::Email)?,
        dob,
    })
}
