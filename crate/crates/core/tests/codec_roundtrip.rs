use gpact_core::chain_sim::{BlockHeader, LogEvent, Receipt, Topic, TxStatus};
use gpact_core::codec::{Decode, Encode};
use gpact_core::crypto::{Address, Digest};
use gpact_core::ids::{ChainId, TxId};
use gpact_core::protocol::{CallPath, ProtocolEvent, RootEvent, SegmentEvent, SegmentOutcome};
use gpact_core::storage::Decision;
use proptest::prelude::*;

fn digest() -> impl Strategy<Value = Digest> {
    any::<[u8; 32]>().prop_map(Digest)
}

fn address() -> impl Strategy<Value = Address> {
    any::<[u8; 20]>().prop_map(Address)
}

fn segment() -> impl Strategy<Value = ProtocolEvent> {
    (
        digest(),
        any::<u64>(),
        proptest::collection::vec(1u32..9, 0..5),
        prop_oneof![
            proptest::collection::vec(any::<u8>(), 0..16).prop_map(SegmentOutcome::Success),
            "[a-z ]{0,12}".prop_map(SegmentOutcome::Error),
        ],
        proptest::collection::vec(address(), 0..4),
    )
        .prop_map(|(t, c, p, outcome, locked)| {
            ProtocolEvent::Segment(SegmentEvent {
                tx_id: TxId(t),
                root_chain: ChainId(c),
                path: CallPath(p),
                outcome,
                locked_contracts: locked,
            })
        })
}

proptest! {
    #[test]
    fn segment_events_round_trip(ev in segment()) {
        let bytes = ev.encode();
        prop_assert_eq!(ProtocolEvent::decode(&bytes).unwrap(), ev);
    }

    #[test]
    fn headers_round_trip(c in any::<u64>(), h in any::<u64>(), t in any::<u64>(), r in digest(), p in digest()) {
        let hdr = BlockHeader { chain: ChainId(c), height: h, timestamp: t, receipt_root: r, parent_digest: p };
        prop_assert_eq!(BlockHeader::decode(&hdr.encode()).unwrap(), hdr);
    }

    #[test]
    fn receipts_round_trip(d in digest(), ok in any::<bool>(), payload in proptest::collection::vec(any::<u8>(), 0..32)) {
        let r = Receipt {
            tx_digest: d,
            status: if ok { TxStatus::Success } else { TxStatus::Failure("x".into()) },
            events: vec![LogEvent { emitter: Address([1; 20]), topic: Topic(0x100), payload }],
        };
        prop_assert_eq!(Receipt::decode(&r.encode()).unwrap(), r);
    }

    #[test]
    fn truncation_never_decodes(ev in segment(), cut in any::<prop::sample::Index>()) {
        let bytes = ev.encode();
        let n = cut.index(bytes.len());
        prop_assert!(ProtocolEvent::decode(&bytes[..n]).is_err());
    }
}

#[test]
fn trailing_bytes_rejected() {
    let mut bytes = ProtocolEvent::Root(RootEvent {
        tx_id: TxId(Digest::ZERO),
        root_chain: ChainId(1),
        decision: Decision::Commit,
    })
    .encode();
    bytes.push(0);
    assert!(ProtocolEvent::decode(&bytes).is_err());
}
