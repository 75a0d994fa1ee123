use invlab::snapshot::{
    inspect_header, load_snapshot, persist_snapshot, Field, GridKind, Snapshot, SnapshotError, SnapshotHeader,
    HEADER_LEN,
};
use proptest::prelude::*;

fn snapshot_strategy() -> impl Strategy<Value = Snapshot> {
    (1u32..6, 1u32..6, any::<bool>(), 1usize..3).prop_flat_map(|(nx, ny, channel, nfields)| {
        let kind = if channel { GridKind::Channel } else { GridKind::Torus };
        let len = (nx * if channel { ny + 1 } else { ny }) as usize;
        let field = ("[a-z_]{1,16}", prop::collection::vec(any::<u64>().prop_map(f64::from_bits), len));
        (prop::collection::vec(field, nfields), any::<u64>(), any::<u64>(), 0.0..1.0f64, 0.0..10.0f64).prop_map(
            move |(fields, lx, ly, nu, t)| Snapshot {
                kind,
                nx,
                ny,
                lx: f64::from_bits(lx),
                ly: f64::from_bits(ly),
                nu,
                t,
                fields: fields.into_iter().map(|(name, values)| Field { name, values }).collect(),
            },
        )
    })
}

fn bits(s: &Snapshot) -> Vec<Vec<u64>> {
    s.fields.iter().map(|f| f.values.iter().map(|v| v.to_bits()).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encode_decode_is_bit_exact(s in snapshot_strategy()) {
        let bytes = s.encode().unwrap();
        let back = Snapshot::decode(&bytes).unwrap();
        prop_assert_eq!(bits(&back), bits(&s));
        prop_assert_eq!(back.header().lx.to_bits(), s.lx.to_bits());
        prop_assert_eq!(back.encode().unwrap(), bytes.clone());
        prop_assert_eq!(SnapshotHeader::decode(&bytes).unwrap().file_len(), Some(bytes.len()));
    }

    #[test]
    fn any_flipped_bit_is_detected(s in snapshot_strategy(), pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut bytes = s.encode().unwrap();
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(Snapshot::decode(&bytes).is_err());
    }

    #[test]
    fn truncation_never_yields_a_state(s in snapshot_strategy(), cut in any::<prop::sample::Index>()) {
        let bytes = s.encode().unwrap();
        let keep = cut.index(bytes.len());
        let r = Snapshot::decode(&bytes[..keep]);
        prop_assert!(r.is_err());
        if keep >= 8 {
            prop_assert!(matches!(r, Err(SnapshotError::Checksum(_))), "{:?}", r);
        }
    }
}

#[test]
fn files_round_trip_and_header_reads_only_the_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.ivlb");
    let snap = Snapshot {
        kind: GridKind::Channel,
        nx: 4,
        ny: 2,
        lx: 6.5,
        ly: 3.25,
        nu: 1e-3,
        t: 0.75,
        fields: vec![Field {
            name: "omega".into(),
            values: (0..12).map(|i| i as f64 * 0.1 - 0.3).collect(),
        }],
    };
    let bytes = persist_snapshot(&snap, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    let back = load_snapshot(&path).unwrap();
    assert_eq!(bits(&back), bits(&snap));

    // Header inspection survives a damaged payload: only the first bytes are read.
    let mut damaged = bytes.clone();
    let last = damaged.len() - 1;
    damaged[last] ^= 0xff;
    damaged.truncate(HEADER_LEN + 3);
    std::fs::write(&path, &damaged).unwrap();
    let h = inspect_header(&path).unwrap();
    assert_eq!((h.kind, h.nx, h.ny, h.nu, h.t), (GridKind::Channel, 4, 2, 1e-3, 0.75));
    assert!(matches!(load_snapshot(&path), Err(SnapshotError::Checksum(_))));
}

#[test]
fn wrong_magic_and_version_are_named() {
    let snap = Snapshot {
        kind: GridKind::Torus,
        nx: 1,
        ny: 1,
        lx: 1.0,
        ly: 1.0,
        nu: 0.0,
        t: 0.0,
        fields: vec![],
    };
    let bytes = snap.encode().unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Snapshot::decode(&bad), Err(SnapshotError::BadMagic(_))));
    let mut v2 = bytes.clone();
    v2[4] = 2;
    assert!(matches!(Snapshot::decode(&v2), Err(SnapshotError::Version(2))));
    assert!(matches!(SnapshotHeader::decode(&v2), Err(SnapshotError::Version(2))));
}
