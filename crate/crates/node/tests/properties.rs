use duetlite_node::body::{encode_object_id, GcBody, PutBody, GC_RELEASE, GC_RETAIN};
use duetlite_node::selftest::{Bench, Reply};
use duetlite_node::{MessageKind, ObjectId, SignedMessage, StorableObject, VerifyKey};
use proptest::prelude::*;

fn put_frame(b: &mut Bench, payload: Vec<u8>) -> (ObjectId, Vec<u8>) {
    let object_id = b.peers[0].fresh_object_id();
    let body = PutBody {
        object_id,
        type_tag: "bytes".into(),
        description: String::new(),
        payload,
    };
    (object_id, b.frame(0, MessageKind::StorePut, body.encode()))
}

#[derive(Clone, Debug)]
enum Op {
    Retain,
    Release,
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn any_bit_flip_is_inert(payload in prop::collection::vec(any::<u8>(), 0..64), pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut b = Bench::new(1, 5);
        let (_, frame) = put_frame(&mut b, payload);
        let mut bad = frame.clone();
        let i = pos.index(bad.len());
        bad[i] ^= 1 << bit;
        let before = b.owner.snapshot();
        let r = b.deliver(0, &bad);
        prop_assert!(matches!(r, Reply::Silent | Reply::Err(..)));
        prop_assert_eq!(b.owner.snapshot(), before);
        if let Ok(m) = SignedMessage::decode(&bad) {
            prop_assert!(!m.verify());
        }
    }

    #[test]
    fn object_codec_roundtrips(payload in prop::collection::vec(any::<u8>(), 0..256), tag in "[a-z_]{0,12}", readers in prop::collection::btree_set(any::<[u8; 32]>(), 0..4), refcount in any::<u64>()) {
        let mut o = StorableObject::new(ObjectId([3; 16]), payload, &tag, "d");
        o.read_permissions = readers.into_iter().map(VerifyKey).collect();
        o.refcount = refcount;
        prop_assert_eq!(StorableObject::decode(&o.encode()).unwrap(), o);
    }

    #[test]
    fn refcount_tracks_retains_and_releases(ops in prop::collection::vec(prop_oneof![Just(Op::Retain), Just(Op::Release)], 0..40)) {
        let mut b = Bench::new(1, 6);
        let (id, frame) = put_frame(&mut b, vec![1; 8]);
        prop_assert!(matches!(b.deliver(0, &frame), Reply::Ok(..)));
        let mut model = 1u64;
        for op in ops {
            let code = match op { Op::Retain => GC_RETAIN, Op::Release => GC_RELEASE };
            let r = b.send(0, MessageKind::GcRelease, GcBody { object_id: id, op: code }.encode());
            if model == 0 {
                prop_assert!(matches!(r, Reply::Err(duetlite_node::ErrorCode::NotFound, _)));
                continue;
            }
            model = if code == GC_RETAIN { model + 1 } else { model - 1 };
            prop_assert_eq!(r, Reply::Ok(MessageKind::GcRelease, model.to_le_bytes().to_vec()));
            prop_assert_eq!(b.owner.get_local(&id).map(|o| o.refcount), (model > 0).then_some(model));
        }
        let get = b.send(0, MessageKind::StoreGet, encode_object_id(&id));
        prop_assert_eq!(model > 0, matches!(get, Reply::Ok(..)));
    }
}
