use muse_autograd::{Graph, ParamStore, Tensor};
use muse_core::audio_codec::{frame_count, padded_len, synthesis_len, AudioCodec, CodecParams};
use muse_core::nn::ParamBuilder;
use proptest::prelude::*;

fn codec(n: usize, seed: u64) -> (AudioCodec, ParamStore) {
    let mut store = ParamStore::new();
    let c = AudioCodec::new(
        &mut ParamBuilder::new(&mut store, seed),
        CodecParams { kernel: 40, channels: n, encoder_relu: false },
    )
    .unwrap();
    (c, store)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn padding_always_tiles(t in 1usize..20_000) {
        let p = padded_len(t, 40);
        prop_assert!(p >= t && p - t.max(40) < 20);
        let k = frame_count(p, 40).unwrap();
        prop_assert_eq!(k, 2 * (p - 40) / 40 + 1);
        prop_assert_eq!(synthesis_len(k, 40), p);
    }

    #[test]
    fn encoder_is_linear(
        a in proptest::collection::vec(-1.0f64..1.0, 120),
        b in proptest::collection::vec(-1.0f64..1.0, 120),
        alpha in -3.0f64..3.0,
    ) {
        let (c, store) = codec(6, 2);
        let enc = |x: Vec<f64>| {
            let mut g = Graph::inference();
            let w = g.input(Tensor::from_vec(&[1, 120], x).unwrap());
            let s = c.encode(&mut g, &store, w).unwrap();
            g.value(s).data().to_vec()
        };
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
        let (ea, eb, ec) = (enc(a), enc(b), enc(combo));
        for i in 0..ec.len() {
            prop_assert!((ec[i] - (alpha * ea[i] + eb[i])).abs() < 1e-10);
        }
    }
}

#[test]
fn reference_lengths() {
    for (t, k) in [(640, 31), (16_000, 799), (64_000, 3199)] {
        assert_eq!(frame_count(t, 40).unwrap(), k);
        assert_eq!(synthesis_len(k, 40), t);
    }
}

#[test]
fn decode_trims_padding_to_requested_length() {
    let (c, store) = codec(8, 3);
    let mut g = Graph::inference();
    let s = g.input(Tensor::full(&[2, 8, 5], 0.1));
    let y = c.decode(&mut g, &store, s, 120).unwrap();
    assert_eq!(g.value(y).shape(), &[2, 120]);
    let y = c.decode(&mut g, &store, s, 101).unwrap();
    assert_eq!(g.value(y).shape(), &[2, 101]);
    assert!(c.decode(&mut g, &store, s, 100).is_err());
    assert!(c.decode(&mut g, &store, s, 121).is_err());
}

#[test]
fn pass_through_recovers_the_signal_away_from_the_edges() {
    let (c, mut store) = codec(40, 4);
    c.set_pass_through(&mut store).unwrap();
    let x: Vec<f64> = (0..400).map(|i| ((i as f64) * 0.13).sin()).collect();
    let mut g = Graph::inference();
    let w = g.input(Tensor::from_vec(&[1, 400], x.clone()).unwrap());
    let s = c.encode(&mut g, &store, w).unwrap();
    let y = c.decode(&mut g, &store, s, 400).unwrap();
    let y = g.value(y).data();
    for i in 20..380 {
        assert!((y[i] - x[i]).abs() < 1e-12, "{i}");
    }
}
