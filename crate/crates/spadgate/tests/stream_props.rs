use proptest::prelude::*;
use spadgate::stream::{read_any, write_binary, write_text};
use spadgate_core::{AfterpulseProfile, DetectorParams, EventStream, SourceParams};

fn arb_stream() -> impl Strategy<Value = EventStream> {
    (
        prop::collection::btree_set(0u64..u64::MAX / 2, 0..300),
        any::<u64>(),
        1e-6f64..1.0,
        0.0f64..0.5,
        prop::collection::vec(0.0f64..0.99, 1..12),
        0u32..5,
        1e3f64..1e10,
        1e-4f64..50.0,
    )
        .prop_map(|(events, seed, qe, dark, pa, n_d, rep, mu)| {
            let events: Vec<u64> = events.into_iter().collect();
            let n_gates = events.last().map_or(1, |&g| g + 1);
            let det =
                DetectorParams::new(qe, dark, AfterpulseProfile::new(pa).unwrap(), n_d).unwrap();
            let src = SourceParams::new(rep, mu).unwrap();
            EventStream::new(events, n_gates, seed, det, src).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn both_formats_round_trip_exactly(stream in arb_stream()) {
        let dir = tempfile::tempdir().unwrap();
        let text = dir.path().join("s.txt");
        let bin = dir.path().join("s.spds");
        write_text(&stream, &text).unwrap();
        write_binary(&stream, &bin).unwrap();
        prop_assert_eq!(&read_any(&text).unwrap(), &stream);
        prop_assert_eq!(&read_any(&bin).unwrap(), &stream);
    }

    #[test]
    fn truncated_binary_never_reads_back(stream in arb_stream(), cut in 1usize..64) {
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("s.spds");
        write_binary(&stream, &bin).unwrap();
        let bytes = std::fs::read(&bin).unwrap();
        let keep = bytes.len().saturating_sub(cut);
        std::fs::write(&bin, &bytes[..keep]).unwrap();
        prop_assert!(read_any(&bin).is_err());
    }
}
