use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use ppid_core::he::bfv::KeyMaterial;
use ppid_core::he::reference::ReferenceBackend;
use ppid_core::he::{Decryptor, Evaluator, HeParams, NoiseBudget, SecurityLevel, SlotVector, PLAIN_MODULUS, SLOT_COUNT};

const T: u64 = PLAIN_MODULUS;

fn slots() -> impl Strategy<Value = SlotVector> {
    proptest::collection::vec(0..T, SLOT_COUNT).prop_map(|v| SlotVector::from_values(v, T).unwrap())
}

fn keys() -> &'static KeyMaterial {
    static K: OnceLock<KeyMaterial> = OnceLock::new();
    K.get_or_init(|| {
        KeyMaterial::generate(&HeParams::select(SecurityLevel::Bits128), &[1, 2, 4, 400], &mut ChaCha20Rng::seed_from_u64(9))
            .unwrap()
    })
}

proptest! {
    #[test]
    fn slot_ring_laws(a in slots(), b in slots(), c in slots()) {
        prop_assert_eq!(a.add(&b, T), b.add(&a, T));
        prop_assert_eq!(a.mul(&b, T), b.mul(&a, T));
        prop_assert_eq!(a.mul(&b.add(&c, T), T), a.mul(&b, T).add(&a.mul(&c, T), T));
        prop_assert_eq!(a.sub(&b, T).add(&b, T), a.clone());
    }

    #[test]
    fn rotations_compose(a in slots(), j in 0usize..SLOT_COUNT, k in 0usize..SLOT_COUNT) {
        prop_assert_eq!(a.rotate_left(j).rotate_left(k), a.rotate_left((j + k) % SLOT_COUNT));
        prop_assert_eq!(a.rotate_left(k).rotate_right(k), a.clone());
        prop_assert_eq!(a.rotate_left(k).get(0), a.get(k));
    }

    #[test]
    fn reference_evaluator_tracks_depth(a in slots(), b in slots()) {
        let ev = Evaluator::new(ReferenceBackend::new(HeParams::select(SecurityLevel::Bits128)));
        let (ca, cb) = (ev.encrypt(&a).unwrap(), ev.encrypt(&b).unwrap());
        let p = ev.mul(&ca, &cb).unwrap();
        prop_assert_eq!(p.mult_depth(), 1);
        prop_assert_eq!(ev.mul_plain(&p, &a).unwrap().mult_depth(), 2);
        prop_assert_eq!(ev.add(&p, &ca).unwrap().mult_depth(), 1);
        prop_assert_eq!(ev.rotate_left(&p, 5).unwrap().mult_depth(), 1);
        let bytes = ev.serialize(&p);
        prop_assert_eq!(ev.deserialize(&bytes).unwrap().mult_depth(), 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Decryption commutes with every evaluator operation.
    #[test]
    fn bfv_is_homomorphic(a in slots(), b in slots(), k in prop::sample::select(vec![1usize, 3, 7, 400])) {
        let km = keys();
        let ev = Evaluator::new(km.backend());
        let dec = Decryptor::new(km.decryptor());
        let (ca, cb) = (ev.encrypt(&a).unwrap(), ev.encrypt(&b).unwrap());
        prop_assert_eq!(dec.decrypt(&ev.add(&ca, &cb).unwrap()).unwrap(), a.add(&b, T));
        prop_assert_eq!(dec.decrypt(&ev.sub(&ca, &cb).unwrap()).unwrap(), a.sub(&b, T));
        prop_assert_eq!(dec.decrypt(&ev.mul_plain(&ca, &b).unwrap()).unwrap(), a.mul(&b, T));
        let prod = ev.mul(&ca, &cb).unwrap();
        prop_assert_eq!(dec.decrypt(&prod).unwrap(), a.mul(&b, T));
        let rotated = ev.rotate_left(&prod, k).unwrap();
        prop_assert_eq!(dec.decrypt(&rotated).unwrap(), a.mul(&b, T).rotate_left(k));
        let NoiseBudget::Bits(bits) = dec.noise_budget(&rotated).unwrap() else { unreachable!() };
        prop_assert!(bits > 100);
    }
}

#[test]
fn op_counts_are_recorded() {
    let ev = Evaluator::new(ReferenceBackend::new(HeParams::select(SecurityLevel::Bits128)));
    let c = ev.encrypt(&SlotVector::zeros()).unwrap();
    let d = ev.mul(&ev.rotate_left(&c, 3).unwrap(), &c).unwrap();
    ev.add_plain(&ev.mul_plain(&d, &SlotVector::zeros()).unwrap(), &SlotVector::zeros()).unwrap();
    let n = ev.op_counts();
    assert_eq!((n.encryptions, n.rotations, n.multiplications, n.plain_multiplications), (1, 1, 1, 1));
    ev.reset_op_counts();
    assert_eq!(ev.op_counts(), Default::default());
}
