use proptest::prelude::*;
use serde_json::Value;
use simserver::protocol::{encode_frame, parse_request, read_frame, DType, FrameDecoder, Tensor};

proptest! {
    /// However the byte stream is chunked, the decoder yields the original
    /// payloads in order and ends idle.
    #[test]
    fn decoder_reassembles_any_chunking(
        payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..300), 0..8),
        cuts in prop::collection::vec(1usize..64, 1..40),
    ) {
        let stream: Vec<u8> = payloads.iter().flat_map(|p| encode_frame(p).unwrap()).collect();
        let mut dec = FrameDecoder::default();
        let mut out = Vec::new();
        let (mut pos, mut k) = (0, 0);
        while pos < stream.len() {
            let end = (pos + cuts[k % cuts.len()]).min(stream.len());
            dec.push(&stream[pos..end]);
            while let Some(f) = dec.next_frame().unwrap() {
                out.push(f);
            }
            pos = end;
            k += 1;
        }
        prop_assert_eq!(&out, &payloads);
        prop_assert!(dec.is_idle());
        let mut r = &stream[..];
        let mut blocking = Vec::new();
        while let Some(f) = read_frame(&mut r).unwrap() {
            blocking.push(f);
        }
        prop_assert_eq!(blocking, payloads);
    }

    #[test]
    fn tensors_round_trip(values in prop::collection::vec(any::<f32>(), 0..64), ints in prop::collection::vec(any::<u16>(), 0..64)) {
        let t = Tensor::from_f32("x", vec![values.len()], &values);
        let back = serde_json::from_value::<Tensor>(serde_json::to_value(&t).unwrap()).unwrap();
        prop_assert_eq!(back.dtype, DType::F32);
        let decoded = back.to_f32().unwrap();
        prop_assert!(decoded.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
        let u = Tensor::from_u16("p", vec![ints.len()], &ints);
        prop_assert_eq!(u.to_u16().unwrap(), ints);
    }

    /// Arbitrary bytes never panic the envelope parser; rejects carry the
    /// argument-format status.
    #[test]
    fn envelope_parser_is_total(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        match parse_request(&bytes) {
            Ok(_) => {}
            Err(resp) => {
                prop_assert_eq!(resp.status.as_str(), "unknown_argument_format");
                let v: Value = serde_json::from_slice(&resp.to_bytes()).unwrap();
                prop_assert!(v["data"]["message"].is_string());
            }
        }
    }
}
