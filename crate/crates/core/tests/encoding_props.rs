use chrono::{Datelike, NaiveDate};
use proptest::prelude::*;

use ppid_core::encoding::{
    decode_demographic, encode_demographic, encode_dob_query, encode_field_query, DateEncoding, Demographics,
    EncodingError, Field, Fingercode, QuantizationConfig, DATE_WIDTH, FINGERCODE_LEN,
};
use ppid_core::he::{PLAIN_MODULUS, SLOT_COUNT};

fn printable(max: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec(0x20u8..0x7f, 1..=max).prop_map(|v| String::from_utf8(v).unwrap())
}

fn date() -> impl Strategy<Value = NaiveDate> {
    (1900i32..2300, 1u32..=365).prop_map(|(y, d)| NaiveDate::from_yo_opt(y, d).unwrap())
}

prop_compose! {
    fn demographics()(
        name in printable(50),
        gender in printable(1),
        pincode in "[0-9]{6}",
        phone in printable(13),
        email in printable(30),
        dob in date(),
    ) -> Demographics {
        Demographics { name, gender, pincode, phone, email, dob }
    }
}

proptest! {
    #[test]
    fn demographic_vector_roundtrips(d in demographics()) {
        let slots = encode_demographic(&d).unwrap();
        prop_assert!(slots.as_slice()[1600..].iter().all(|&v| v == 0));
        prop_assert_eq!(decode_demographic(&slots).unwrap(), d);
    }

    #[test]
    fn field_query_equals_isolated_field(d in demographics(), k in 0usize..5) {
        // The stored field moved to the origin is exactly what a matching
        // query encodes; that is what makes the subtraction vanish.
        let field = Field::ALL[k];
        let stored = encode_demographic(&d).unwrap();
        let query = encode_field_query(field, d.field(field)).unwrap();
        let aligned = stored.mul(&ppid_core::he::SlotVector::mask(field.range()), PLAIN_MODULUS)
            .rotate_left(field.start());
        prop_assert_eq!(aligned, query);
    }

    #[test]
    fn distinct_values_encode_differently(a in printable(50), b in printable(50)) {
        prop_assume!(a != b);
        prop_assert_ne!(encode_field_query(Field::Name, &a).unwrap(), encode_field_query(Field::Name, &b).unwrap());
    }

    #[test]
    fn overlong_fields_are_rejected(extra in 1usize..20, k in 0usize..5) {
        let field = Field::ALL[k];
        let value = "1".repeat(field.max_chars() + extra);
        prop_assert!(encode_field_query(field, &value).is_err());
    }

    #[test]
    fn date_encoding_roundtrips_and_orders(a in date(), b in date()) {
        let (ea, eb) = (DateEncoding::from_date(a).unwrap(), DateEncoding::from_date(b).unwrap());
        prop_assert_eq!(ea.to_date(), Some(a));
        prop_assert_eq!(ea.cmp(&eb), a.cmp(&b));
    }

    #[test]
    fn dob_query_is_unary_year_and_constant_day(d in date()) {
        let (y, day) = encode_dob_query(d).unwrap();
        let offset = (d.year() - 1900) as usize;
        for i in 0..SLOT_COUNT {
            prop_assert_eq!(y.get(i), u64::from(i < offset));
            prop_assert_eq!(day.get(i), if i < DATE_WIDTH { d.ordinal() as u64 } else { 0 });
        }
    }

    #[test]
    fn quantization_is_monotone_and_bounded(a in 0.0f64..=255.0, b in 0.0f64..=255.0) {
        let cfg = QuantizationConfig::default();
        let (qa, qb) = (cfg.quantize(0, a).unwrap(), cfg.quantize(0, b).unwrap());
        prop_assert!(qa <= cfg.max_level && qb <= cfg.max_level);
        if a <= b { prop_assert!(qa <= qb); }
    }

    #[test]
    fn fingercode_distance_never_wraps(levels in proptest::collection::vec(0u64..=79, FINGERCODE_LEN)) {
        let cfg = QuantizationConfig::default();
        let a = Fingercode::from_levels(levels, &cfg).unwrap();
        let far = Fingercode::from_levels(
            a.levels().iter().map(|&l| if l > cfg.max_level / 2 { 0 } else { cfg.max_level }).collect(),
            &cfg,
        ).unwrap();
        prop_assert!(a.squared_distance(&far) + cfg.beta < PLAIN_MODULUS);
    }
}

#[test]
fn out_of_range_inputs_fail_before_encryption() {
    let cfg = QuantizationConfig::default();
    assert_eq!(cfg.max_level, 79);
    assert!(matches!(
        DateEncoding::from_date(NaiveDate::from_ymd_opt(1899, 12, 31).unwrap()),
        Err(EncodingError::DateOutOfRange(_))
    ));
    assert!(DateEncoding::from_date(NaiveDate::from_ymd_opt(2300, 1, 1).unwrap()).is_err());
    assert!(Fingercode::quantize(&[0.0; 639], &cfg).is_err());
    let mut raw = [10.0; FINGERCODE_LEN];
    raw[7] = 255.5;
    assert!(matches!(Fingercode::quantize(&raw, &cfg), Err(EncodingError::FingercodeValue { index: 7, .. })));
    assert!(encode_field_query(Field::Pincode, "12345").is_err());
    assert!(encode_field_query(Field::Gender, "MF").is_err());
    assert!(encode_field_query(Field::Name, "Zoë").is_err());
}
